//! Convolution kernels evaluated at pseudo-coordinates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;

use crate::error::{Error, Result};

/// Kernel family of a geometric convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// Tensor-product open-uniform B-splines with `grid` basis functions per
    /// dimension; one weight block per basis product.
    BSpline { degree: usize, grid: usize },
    /// `count` diagonal Gaussians with learnable means and log-variances.
    Gaussian { count: usize },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::BSpline { degree: 1, grid: 5 }
    }
}

impl KernelSpec {
    /// Number of kernels `K` for pseudo-coordinates of dimension `d`.
    pub fn n_kernels(&self, d: usize) -> usize {
        match *self {
            KernelSpec::BSpline { grid, .. } => grid.pow(d as u32),
            KernelSpec::Gaussian { count } => count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::BSpline { degree, .. } if degree > MAX_DEGREE => Err(Error::Argument(format!(
                "B-spline degree {degree} above the supported maximum {MAX_DEGREE}"
            ))),
            KernelSpec::BSpline { degree, grid } if grid < degree + 1 || grid < 2 => Err(Error::Argument(format!(
                "B-spline grid {grid} too small for degree {degree}"
            ))),
            KernelSpec::Gaussian { count: 0 } => Err(Error::Argument("at least one Gaussian kernel needed".into())),
            _ => Ok(()),
        }
    }
}

/// `exp(−½ Σ_c (u_c − μ_c)² / exp(log_var_c))`.
pub fn gaussian_kernel(u: &[f64], mu: &[f64], log_var: &[f64]) -> f64 {
    let mut q = 0.0;
    for c in 0..u.len() {
        let t = u[c] - mu[c];
        q += t * t / log_var[c].exp();
    }
    (-0.5 * q).exp()
}

/// Largest supported B-spline degree.
pub const MAX_DEGREE: usize = 3;

/// Nonzero open-uniform B-spline basis functions of one dimension at `s`,
/// where `s` is measured in knot units over `[0, grid − degree]`.
///
/// Returns the index of the first basis function, their values, and their
/// derivatives with respect to `s`.
pub fn bspline_basis_1d(s: f64, degree: usize, grid: usize) -> (usize, Vec<f64>, Vec<f64>) {
    let mut vals = [0.0; MAX_DEGREE + 1];
    let mut ders = [0.0; MAX_DEGREE + 1];
    let first = basis_1d(s, degree, grid, &mut vals, &mut ders);
    (first, vals[..=degree].to_vec(), ders[..=degree].to_vec())
}

fn basis_1d(s: f64, m: usize, grid: usize, vals: &mut [f64; MAX_DEGREE + 1], ders: &mut [f64; MAX_DEGREE + 1]) -> usize {
    let top = (grid - m) as f64;
    let knot = |i: usize| (i as f64 - m as f64).clamp(0.0, top);
    let s = s.clamp(0.0, top);
    // span i with knot(i) <= s < knot(i + 1), in [m, grid − 1]
    let span = ((s.floor() as usize) + m).min(grid - 1);
    cox_de_boor(s, span, m, &knot, vals);
    ders.iter_mut().for_each(|x| *x = 0.0);
    if m > 0 {
        let mut lower = [0.0; MAX_DEGREE + 1];
        cox_de_boor(s, span, m - 1, &knot, &mut lower);
        for (r, dr) in ders.iter_mut().enumerate().take(m + 1) {
            let i = span - m + r;
            let mut v = 0.0;
            if r >= 1 {
                let den = knot(i + m) - knot(i);
                if den > 0.0 {
                    v += lower[r - 1] / den;
                }
            }
            if r < m {
                let den = knot(i + m + 1) - knot(i + 1);
                if den > 0.0 {
                    v -= lower[r] / den;
                }
            }
            *dr = m as f64 * v;
        }
    }
    span - m
}

/// Degree-`p` basis values `N_{span−p..=span}` at `s`.
fn cox_de_boor(s: f64, span: usize, p: usize, knot: &impl Fn(usize) -> f64, n: &mut [f64; MAX_DEGREE + 1]) {
    let mut left = [0.0; MAX_DEGREE + 1];
    let mut right = [0.0; MAX_DEGREE + 1];
    n.iter_mut().for_each(|x| *x = 0.0);
    n[0] = 1.0;
    for j in 1..=p {
        left[j] = s - knot(span + 1 - j);
        right[j] = knot(span + j) - s;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
}

/// Affine box mapping pseudo-coordinates onto the unit kernel domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl KernelDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Argument(format!("invalid kernel domain {lo:?} .. {hi:?}")));
        }
        Ok(KernelDomain { lo, hi })
    }

    /// `[−r, r]` in every dimension.
    pub fn symmetric(r: &[f64]) -> Result<Self> {
        Self::new(r.iter().map(|x| -x).collect(), r.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// Nonzero kernel values of every edge, `stride` kernels per edge.
#[derive(Clone, Debug, Default)]
pub(crate) struct EdgeBases {
    pub stride: usize,
    pub d: usize,
    /// Kernel indices.
    pub index: Vec<usize>,
    pub value: Vec<f64>,
    /// `∂φ/∂u`, `d` entries per kernel.
    pub grad_u: Vec<f64>,
}

impl EdgeBases {
    fn new(n_edges: usize, stride: usize, d: usize) -> Self {
        EdgeBases {
            stride,
            d,
            index: Vec::with_capacity(n_edges * stride),
            value: Vec::with_capacity(n_edges * stride),
            grad_u: Vec::with_capacity(n_edges * stride * d),
        }
    }

    pub fn edge(&self, e: usize) -> (&[usize], &[f64], &[f64]) {
        let (a, b) = (e * self.stride, (e + 1) * self.stride);
        (&self.index[a..b], &self.value[a..b], &self.grad_u[a * self.d..b * self.d])
    }
}

/// Tensor-product B-spline bases at the pseudo-coordinates `u` (`d` per
/// edge); also returns the number of clamped coordinates.
pub(crate) fn bspline_bases(u: &[f64], d: usize, degree: usize, grid: usize, domain: &KernelDomain) -> (EdgeBases, usize) {
    let n_edges = u.len() / d;
    let m1 = degree + 1;
    let total = m1.pow(d as u32);
    let top = (grid - degree) as f64;
    let mut out = EdgeBases::new(n_edges, total, d);
    let mut clamped = 0;
    let mut first = vec![0usize; d];
    let mut vals = vec![[0.0; MAX_DEGREE + 1]; d];
    let mut ders = vec![[0.0; MAX_DEGREE + 1]; d];
    let mut idx = vec![0usize; total];
    let mut val = vec![0.0; total];
    let mut grad = vec![0.0; total * d];
    for ue in u.chunks_exact(d) {
        for c in 0..d {
            let width = domain.hi[c] - domain.lo[c];
            let t = (ue[c] - domain.lo[c]) / width;
            let inside = (0.0..=1.0).contains(&t);
            if !inside {
                clamped += 1;
            }
            first[c] = basis_1d(t.clamp(0.0, 1.0) * top, degree, grid, &mut vals[c], &mut ders[c]);
            let scale = if inside { top / width } else { 0.0 };
            ders[c].iter_mut().for_each(|x| *x *= scale);
        }
        // tensor product, first dimension most significant
        let mut len = 1;
        idx[0] = 0;
        val[0] = 1.0;
        for c in 0..d {
            for t in (0..len).rev() {
                let (k0, v0) = (idx[t], val[t]);
                for o in (0..m1).rev() {
                    let dst = t * m1 + o;
                    idx[dst] = k0 * grid + first[c] + o;
                    val[dst] = v0 * vals[c][o];
                    for c2 in 0..c {
                        grad[dst * d + c2] = grad[t * d + c2] * vals[c][o];
                    }
                    grad[dst * d + c] = v0 * ders[c][o];
                }
            }
            len *= m1;
        }
        out.index.extend_from_slice(&idx[..total]);
        out.value.extend_from_slice(&val[..total]);
        out.grad_u.extend_from_slice(&grad[..total * d]);
    }
    (out, clamped)
}

/// B-spline kernel values for fixed per-edge pseudo-coordinates, reusable
/// across forward passes.
#[derive(Clone, Debug)]
pub struct KernelBasis {
    pub(crate) bases: Arc<EdgeBases>,
    clamped: usize,
    kernel: KernelSpec,
    domain: KernelDomain,
}

impl KernelBasis {
    pub fn n_edges(&self) -> usize {
        self.bases.index.len() / self.bases.stride.max(1)
    }

    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn matches(&self, kernel: &KernelSpec, domain: &KernelDomain) -> bool {
        self.kernel == *kernel && self.domain == *domain
    }

    pub(crate) fn new(bases: Arc<EdgeBases>, clamped: usize, kernel: KernelSpec, domain: KernelDomain) -> Self {
        KernelBasis {
            bases,
            clamped,
            kernel,
            domain,
        }
    }
}

/// Evaluates B-spline kernels once for the rows of `rel_coords`.
pub fn precompute_basis(rel_coords: &Tensor, kernel: &KernelSpec, domain: &KernelDomain) -> Result<KernelBasis> {
    kernel.validate()?;
    let KernelSpec::BSpline { degree, grid } = *kernel else {
        return Err(Error::Argument("only B-spline kernels have parameter-free bases".into()));
    };
    if rel_coords.cols() != domain.dim() {
        return Err(Error::Argument(format!(
            "pseudo-coordinates of dimension {} for a {}-dimensional domain",
            rel_coords.cols(),
            domain.dim()
        )));
    }
    let (bases, clamped) = bspline_bases(rel_coords.data(), domain.dim(), degree, grid, domain);
    Ok(KernelBasis::new(Arc::new(bases), clamped, *kernel, domain.clone()))
}

/// All Gaussian kernel values at the pseudo-coordinates `u` (`d` per edge).
pub(crate) fn gaussian_bases(u: &[f64], d: usize, mu: &[f64], log_var: &[f64]) -> EdgeBases {
    let k = mu.len() / d;
    let mut out = EdgeBases::new(u.len() / d, k, d);
    let inv_var: Vec<f64> = log_var.iter().map(|lv| (-lv).exp()).collect();
    for ue in u.chunks_exact(d) {
        for j in 0..k {
            let m = &mu[j * d..(j + 1) * d];
            let iv = &inv_var[j * d..(j + 1) * d];
            let mut q = 0.0;
            for c in 0..d {
                let t = ue[c] - m[c];
                q += t * t * iv[c];
            }
            let phi = (-0.5 * q).exp();
            out.index.push(j);
            out.value.push(phi);
            for c in 0..d {
                out.grad_u.push(-phi * (ue[c] - m[c]) * iv[c]);
            }
        }
    }
    out
}
