use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cholesky::EnvelopeCholesky;
use super::dense::symmetric_eigen;
use super::{Laplacian, SpectralEmbedding};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Which eigensolver backs [`smallest_eigenpairs`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Dense up to `dense_threshold` nodes, iterative above.
    Auto,
    Dense,
    /// Shift-invert block subspace iteration with Rayleigh–Ritz.
    Iterative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenOptions {
    pub d: usize,
    /// Relative to the largest computed eigenvalue.
    pub zero_tol: f64,
    pub solver: SolverKind,
    pub dense_threshold: usize,
    /// Target `‖L u − λ u‖₂` for the iterative solver.
    pub residual_tol: f64,
    pub max_iters: usize,
    pub shift: f64,
    /// Extra block vectors beyond `d + 1`.
    pub guard: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            d: 3,
            zero_tol: 1e-8,
            solver: SolverKind::Auto,
            dense_threshold: 400,
            residual_tol: 1e-10,
            max_iters: 1000,
            shift: 1e-4,
            guard: 6,
        }
    }
}

/// The `d` smallest eigenpairs above the zero tolerance, as an unaligned
/// embedding `U Λ^{-1/2}`.
pub fn smallest_eigenpairs(lap: &Laplacian, d: usize, zero_tol: f64) -> Result<SpectralEmbedding> {
    smallest_eigenpairs_with(
        lap,
        &EigenOptions {
            d,
            zero_tol,
            ..Default::default()
        },
    )
}

pub fn smallest_eigenpairs_with(lap: &Laplacian, opts: &EigenOptions) -> Result<SpectralEmbedding> {
    let n = lap.n();
    let d = opts.d;
    if d == 0 {
        return Err(Error::Argument("embedding dimension must be at least 1".into()));
    }
    if n < d + 1 {
        return Err(Error::Argument(format!("{n} nodes cannot carry {d} non-trivial eigenvectors")));
    }
    if !(opts.zero_tol >= 0.0) {
        return Err(Error::Argument(format!("zero_tol must be non-negative, got {}", opts.zero_tol)));
    }
    let dense = match opts.solver {
        SolverKind::Dense => true,
        SolverKind::Iterative => false,
        SolverKind::Auto => n <= opts.dense_threshold || n <= d + 1 + opts.guard,
    };
    let (values, vectors) = if dense {
        let (w, v) = symmetric_eigen(&lap.to_dense(), n)?;
        let cols = (0..n).map(|c| (0..n).map(|r| v[r * n + c]).collect()).collect();
        (w, cols)
    } else {
        subspace_iteration(lap, opts)?
    };
    let largest = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = opts.zero_tol * largest;
    let zero_modes = values.iter().take_while(|&&v| v <= cutoff).count();
    if zero_modes != 1 {
        return Err(Error::Disconnected { zero_modes });
    }
    if values.len() < d + 1 {
        return Err(Error::Argument(format!("only {} eigenpairs available", values.len())));
    }
    let mut coords = Tensor::zeros(n, d);
    let mut eig = Vec::with_capacity(d);
    for c in 0..d {
        let lambda = values[c + 1];
        let mut u: Vec<f64> = vectors[c + 1].clone();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in u.iter_mut() {
            *x /= norm;
        }
        fix_sign(&mut u);
        let s = 1.0 / lambda.sqrt();
        for (r, x) in u.iter().enumerate() {
            coords.set(r, c, x * s);
        }
        eig.push(lambda);
    }
    Ok(SpectralEmbedding::new_unaligned(coords, eig))
}

/// Flips `u` so its largest-magnitude entry (first on ties) is positive.
pub(crate) fn fix_sign(u: &mut [f64]) {
    let mut best = 0;
    for (i, x) in u.iter().enumerate() {
        if x.abs() > u[best].abs() {
            best = i;
        }
    }
    if u[best] < 0.0 {
        for x in u.iter_mut() {
            *x = -*x;
        }
    }
}

fn orthonormalize(block: &mut [Vec<f64>]) -> Result<()> {
    for _ in 0..2 {
        for c in 0..block.len() {
            let (done, rest) = block.split_at_mut(c);
            let v = &mut rest[0];
            for q in done.iter() {
                let p: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= p * y;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 1e-300) {
                return Err(Error::Numerical("subspace iteration lost rank".into()));
            }
            for x in v.iter_mut() {
                *x /= norm;
            }
        }
    }
    Ok(())
}

/// Returns Ritz values (ascending) and unit Ritz vectors of the iteration block.
fn subspace_iteration(lap: &Laplacian, opts: &EigenOptions) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = lap.n();
    let m = lap.matrix();
    let p = (opts.d + 1 + opts.guard).min(n);
    let chol = EnvelopeCholesky::factor(m, opts.shift)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x51ec);
    let mut block: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    orthonormalize(&mut block)?;
    let mut lv = vec![vec![0.0; n]; p];
    let want = opts.d + 1;
    for iter in 1..=opts.max_iters {
        for v in block.iter_mut() {
            chol.solve_in_place(v);
        }
        orthonormalize(&mut block)?;
        for (v, out) in block.iter().zip(lv.iter_mut()) {
            m.mul_vec(v, out);
        }
        let mut h = vec![0.0; p * p];
        for a in 0..p {
            for b in a..p {
                let x: f64 = block[a].iter().zip(&lv[b]).map(|(s, t)| s * t).sum();
                h[a * p + b] = x;
                h[b * p + a] = x;
            }
        }
        let (theta, w) = symmetric_eigen(&h, p)?;
        let rotate = |src: &[Vec<f64>]| -> Vec<Vec<f64>> {
            (0..p)
                .map(|c| {
                    let mut out = vec![0.0; n];
                    for (k, s) in src.iter().enumerate() {
                        let coef = w[k * p + c];
                        for (o, x) in out.iter_mut().zip(s) {
                            *o += coef * x;
                        }
                    }
                    out
                })
                .collect()
        };
        block = rotate(&block);
        lv = rotate(&lv);
        let converged = (0..want.min(p)).all(|c| {
            let r: f64 = lv[c]
                .iter()
                .zip(&block[c])
                .map(|(a, b)| (a - theta[c] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            r <= opts.residual_tol
        });
        if converged {
            return Ok((theta, block));
        }
        if iter == opts.max_iters {
            break;
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iters,
    })
}
