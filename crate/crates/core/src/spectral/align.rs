//! Iterative closest point alignment of an embedding onto a reference.

use serde::{Deserialize, Serialize};

use super::dense::symmetric_eigen;
use super::{SpectralEmbedding, TREE_THRESHOLD};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::kdtree::{dist2, nearest_brute, KdTree};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignOptions {
    pub max_iters: usize,
    /// Stop once the residual improves by less than this.
    pub tol: f64,
    /// Project every transform onto the nearest orthogonal matrix.
    pub orthogonal: bool,
    /// Add second-moment eigenbasis matches to the sign-flip starts.
    pub moment_init: bool,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            max_iters: 50,
            tol: 1e-9,
            orthogonal: false,
            moment_init: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// Reference node matched to each node.
    pub pi: Vec<usize>,
    /// Mean squared distance to the matched reference nodes.
    pub residual: f64,
    /// Residual after initialization and after each accepted iteration.
    pub trace: Vec<f64>,
}

pub fn align_to_reference(
    emb: &SpectralEmbedding,
    reference: &SpectralEmbedding,
    max_iters: usize,
    tol: f64,
) -> Result<(SpectralEmbedding, Correspondence)> {
    align_with(
        emb,
        reference,
        &AlignOptions {
            max_iters,
            tol,
            ..Default::default()
        },
    )
}

struct Matcher<'a> {
    points: &'a [f64],
    d: usize,
    tree: Option<KdTree>,
}

impl<'a> Matcher<'a> {
    fn new(points: &'a [f64], d: usize) -> Self {
        let n = points.len() / d;
        Matcher {
            points,
            d,
            tree: (n >= TREE_THRESHOLD).then(|| KdTree::new(points, d)),
        }
    }

    fn nearest(&self, q: &[f64]) -> usize {
        match &self.tree {
            Some(t) => t.nearest(q).unwrap().index,
            None => nearest_brute(self.points, self.d, q).expect("reference is not empty").index,
        }
    }

    /// Correspondence and mean squared residual for `x R`.
    fn assign(&self, x: &Tensor, r: &Tensor) -> Result<(Vec<usize>, f64)> {
        let moved = x.matmul(r)?;
        let mut pi = Vec::with_capacity(x.rows());
        let mut total = 0.0;
        for i in 0..x.rows() {
            let q = moved.row(i);
            let j = self.nearest(q);
            total += dist2(q, &self.points[j * self.d..(j + 1) * self.d]);
            pi.push(j);
        }
        let res = total / x.rows() as f64;
        if !res.is_finite() {
            return Err(Error::Numerical("non-finite alignment residual".into()));
        }
        Ok((pi, res))
    }
}

pub fn align_with(
    emb: &SpectralEmbedding,
    reference: &SpectralEmbedding,
    opts: &AlignOptions,
) -> Result<(SpectralEmbedding, Correspondence)> {
    let d = emb.d;
    if reference.d != d {
        return Err(Error::Argument(format!(
            "embedding dimension {d} differs from reference dimension {}",
            reference.d
        )));
    }
    if emb.aligned {
        return Err(Error::State("embedding is already aligned".into()));
    }
    if emb.n() == 0 || reference.n() == 0 {
        return Err(Error::Argument("cannot align an empty embedding".into()));
    }
    let x = &emb.coords;
    let y = &reference.coords;
    let matcher = Matcher::new(y.data(), d);

    let mut starts = sign_flips(d);
    if opts.moment_init {
        for r in moment_starts(x, y)? {
            starts.push(if opts.orthogonal { nearest_orthogonal(&r)? } else { r });
        }
    }
    let mut best: Option<(Tensor, Vec<usize>, f64)> = None;
    for r in starts {
        let (pi, res) = matcher.assign(x, &r)?;
        if best.as_ref().map_or(true, |b| res < b.2) {
            best = Some((r, pi, res));
        }
    }
    let (mut r, mut pi, mut res) = best.unwrap();
    let mut trace = vec![res];
    for _ in 0..opts.max_iters {
        let mut target = Tensor::zeros(x.rows(), d);
        for (i, &j) in pi.iter().enumerate() {
            target.row_mut(i).copy_from_slice(y.row(j));
        }
        let mut r_new = least_squares(x, &target)?;
        if opts.orthogonal {
            r_new = nearest_orthogonal(&r_new)?;
        }
        let (pi_new, res_new) = matcher.assign(x, &r_new)?;
        if res_new > res {
            break;
        }
        let gain = res - res_new;
        r = r_new;
        pi = pi_new;
        res = res_new;
        trace.push(res);
        if gain < opts.tol {
            break;
        }
    }
    let aligned = SpectralEmbedding {
        coords: x.matmul(&r)?,
        eigenvalues: emb.eigenvalues.clone(),
        d,
        aligned: true,
        transform: r,
    };
    Ok((aligned, Correspondence { pi, residual: res, trace }))
}

fn sign_flips(d: usize) -> Vec<Tensor> {
    (0..1usize << d)
        .map(|mask| {
            let mut r = Tensor::identity(d);
            for c in 0..d {
                if mask >> c & 1 == 1 {
                    r.set(c, c, -1.0);
                }
            }
            r
        })
        .collect()
}

/// `V_x Σ_x^{-1/2} S Σ_y^{1/2} V_yᵀ` over all sign patterns `S`, mapping the
/// second-moment ellipsoid of `x` onto that of `y`.
fn moment_starts(x: &Tensor, y: &Tensor) -> Result<Vec<Tensor>> {
    let d = x.cols();
    let moments = |t: &Tensor| -> Result<(Vec<f64>, Tensor)> {
        let mut m = t.matmul_tn(t)?;
        m.scale_in_place(1.0 / t.rows() as f64);
        let (w, v) = symmetric_eigen(m.data(), d)?;
        Ok((w, Tensor::from_vec(d, d, v)?))
    };
    let (wx, vx) = moments(x)?;
    let (wy, vy) = moments(y)?;
    if wx.iter().chain(&wy).any(|&w| !(w > 0.0)) {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for s in sign_flips(d) {
        let mut mid = Tensor::zeros(d, d);
        for c in 0..d {
            mid.set(c, c, s.get(c, c) * (wy[c] / wx[c]).sqrt());
        }
        out.push(vx.matmul(&mid)?.matmul_nt(&vy)?);
    }
    Ok(out)
}

/// `argmin_R ‖x R − y‖_F` via the normal equations.
fn least_squares(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    let g = x.matmul_tn(x)?;
    let b = x.matmul_tn(y)?;
    solve(&g, &b)
}

/// Gaussian elimination with partial pivoting for a small square system.
fn solve(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = a.rows();
    let m = b.cols();
    let mut a = a.clone();
    let mut b = b.clone();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs()))
            .unwrap();
        if !(a.get(piv, col).abs() > 1e-300) {
            return Err(Error::Numerical("singular normal equations in alignment".into()));
        }
        for c in 0..n {
            let t = a.get(col, c);
            a.set(col, c, a.get(piv, c));
            a.set(piv, c, t);
        }
        for c in 0..m {
            let t = b.get(col, c);
            b.set(col, c, b.get(piv, c));
            b.set(piv, c, t);
        }
        for r in col + 1..n {
            let f = a.get(r, col) / a.get(col, col);
            for c in col..n {
                a.set(r, c, a.get(r, c) - f * a.get(col, c));
            }
            for c in 0..m {
                b.set(r, c, b.get(r, c) - f * b.get(col, c));
            }
        }
    }
    let mut x = Tensor::zeros(n, m);
    for c in 0..m {
        for r in (0..n).rev() {
            let mut s = b.get(r, c);
            for k in r + 1..n {
                s -= a.get(r, k) * x.get(k, c);
            }
            x.set(r, c, s / a.get(r, r));
        }
    }
    Ok(x)
}

/// Orthogonal polar factor `R (RᵀR)^{-1/2}`.
pub(crate) fn nearest_orthogonal(r: &Tensor) -> Result<Tensor> {
    let d = r.rows();
    let rtr = r.matmul_tn(r)?;
    let (w, v) = symmetric_eigen(rtr.data(), d)?;
    if w.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Numerical("rank-deficient transform".into()));
    }
    let v = Tensor::from_vec(d, d, v)?;
    let mut scaled = v.clone();
    for r_ in 0..d {
        for c in 0..d {
            scaled.set(r_, c, v.get(r_, c) / w[c].sqrt());
        }
    }
    r.matmul(&scaled.matmul_nt(&v)?)
}
