//! Geometric graph convolution as a single differentiable operation.

use std::sync::{Arc, OnceLock};

use super::kernel::{bspline_bases, gaussian_bases, EdgeBases, KernelBasis, KernelDomain, KernelSpec};
use crate::autodiff::{CustomBackward, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Per-node neighbour lists in compressed form.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhoods {
    offsets: Vec<usize>,
    sources: Vec<usize>,
}

impl Neighborhoods {
    pub fn from_lists(lists: &[Vec<usize>]) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut sources = Vec::new();
        for l in lists {
            sources.extend_from_slice(l);
            offsets.push(sources.len());
        }
        Neighborhoods { offsets, sources }
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.sources.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.sources[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `(i, j)` for every edge in storage order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_nodes()).flat_map(move |i| self.neighbors(i).iter().map(move |&j| (i, j)))
    }
}

/// Where the pseudo-coordinates `u_ij` come from.
#[derive(Clone, Debug)]
pub enum PseudoCoords {
    /// Node coordinates; `u_ij = x_j − x_i`, differentiable if the variable is.
    Nodes(Var),
    /// One fixed row per edge, in [`Neighborhoods::edges`] order.
    Edges(Tensor),
    /// Kernel values already evaluated at fixed per-edge coordinates.
    Basis(Arc<KernelBasis>),
    /// Like `Nodes`, with B-spline values computed once and reused by every
    /// convolution that receives a clone.
    Shared(Var, Arc<OnceLock<Arc<KernelBasis>>>),
}

impl PseudoCoords {
    pub fn shared(x: Var) -> Self {
        PseudoCoords::Shared(x, Arc::new(OnceLock::new()))
    }
}

/// Trainable tensors of one convolution.
///
/// `weight` is `(K·M_in) × M_out` with row `k·M_in + q` holding `w_{·qk}`.
#[derive(Clone, Copy, Debug)]
pub struct ConvParams {
    pub weight: Var,
    pub bias: Var,
    /// Gaussian means, `K × d`.
    pub mu: Option<Var>,
    /// Gaussian diagonal log-variances, `K × d`.
    pub log_var: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvOutput {
    pub out: Var,
    /// Pseudo-coordinates clamped to the B-spline domain.
    pub clamped: usize,
}

struct ConvBackward {
    targets: Vec<usize>,
    sources: Vec<usize>,
    bases: Arc<EdgeBases>,
    u: Vec<f64>,
    d: usize,
    m_in: usize,
    m_out: usize,
    coords_slot: Option<usize>,
    gauss_slots: Option<(usize, usize)>,
}

/// `z_ip = Σ_{j∈N_i} Σ_q Σ_k w_pqk · y_jq · φ_k(u_ij) + b_p`.
pub fn geometric_conv(
    tape: &mut Tape,
    y: Var,
    nbrs: &Neighborhoods,
    coords: &PseudoCoords,
    params: &ConvParams,
    kernel: &KernelSpec,
    domain: &KernelDomain,
) -> Result<ConvOutput> {
    kernel.validate()?;
    let n = nbrs.n_nodes();
    let d = domain.dim();
    let k = kernel.n_kernels(d);
    let (rows, m_in) = y.shape();
    if rows != n {
        return Err(Error::Shape {
            op: "geometric_conv",
            left: y.shape(),
            right: (n, m_in),
        });
    }
    let (wr, m_out) = params.weight.shape();
    if wr != k * m_in {
        return Err(Error::Shape {
            op: "geometric_conv weight",
            left: params.weight.shape(),
            right: (k * m_in, m_out),
        });
    }
    if params.bias.shape() != (1, m_out) {
        return Err(Error::Shape {
            op: "geometric_conv bias",
            left: params.bias.shape(),
            right: (1, m_out),
        });
    }
    if let Some(&bad) = nbrs.sources.iter().find(|&&j| j >= n) {
        return Err(Error::Argument(format!("neighbour index {bad} outside {n} nodes")));
    }
    let n_edges = nbrs.n_edges();
    let mut u = vec![0.0; n_edges * d];
    let mut inputs = vec![y, params.weight, params.bias];
    let mut coords_slot = None;
    match coords {
        PseudoCoords::Nodes(x) | PseudoCoords::Shared(x, _) => {
            if x.shape() != (n, d) {
                return Err(Error::Shape {
                    op: "geometric_conv coords",
                    left: x.shape(),
                    right: (n, d),
                });
            }
            let xv = tape.value(*x);
            for (e, (i, j)) in nbrs.edges().enumerate() {
                for c in 0..d {
                    u[e * d + c] = xv.get(j, c) - xv.get(i, c);
                }
            }
            coords_slot = Some(inputs.len());
            inputs.push(*x);
        }
        PseudoCoords::Edges(t) => {
            if t.rows() != n_edges || t.cols() != d {
                return Err(Error::Argument(format!(
                    "pseudo-coordinates {:?} do not cover {n_edges} edges of dimension {d}",
                    t.shape()
                )));
            }
            u.copy_from_slice(t.data());
        }
        PseudoCoords::Basis(b) => {
            if b.n_edges() != n_edges || !b.matches(kernel, domain) {
                return Err(Error::Argument(
                    "precomputed basis does not match these edges, kernel and domain".into(),
                ));
            }
        }
    }
    let mut gauss_slots = None;
    let mut clamped = 0;
    let bases = match (*kernel, coords) {
        (_, PseudoCoords::Basis(b)) => {
            clamped = b.clamped();
            b.bases.clone()
        }
        (KernelSpec::BSpline { degree, grid }, PseudoCoords::Shared(_, cache)) => {
            let fresh = || {
                let (b, c) = bspline_bases(&u, d, degree, grid, domain);
                Arc::new(KernelBasis::new(Arc::new(b), c, *kernel, domain.clone()))
            };
            let b = match cache.get() {
                Some(b) if b.n_edges() == n_edges && b.matches(kernel, domain) => b.clone(),
                Some(_) => fresh(),
                None => cache.get_or_init(fresh).clone(),
            };
            clamped = b.clamped();
            b.bases.clone()
        }
        (KernelSpec::BSpline { degree, grid }, _) => {
            let (b, c) = bspline_bases(&u, d, degree, grid, domain);
            clamped = c;
            Arc::new(b)
        }
        (KernelSpec::Gaussian { .. }, _) => {
            let (Some(mu), Some(lv)) = (params.mu, params.log_var) else {
                return Err(Error::Argument("Gaussian kernels need mu and log_var".into()));
            };
            for v in [mu, lv] {
                if v.shape() != (k, d) {
                    return Err(Error::Shape {
                        op: "geometric_conv gaussian",
                        left: v.shape(),
                        right: (k, d),
                    });
                }
            }
            gauss_slots = Some((inputs.len(), inputs.len() + 1));
            inputs.push(mu);
            inputs.push(lv);
            Arc::new(gaussian_bases(&u, d, tape.value(mu).data(), tape.value(lv).data()))
        }
    };

    let yv = tape.value(y);
    let wv = tape.value(params.weight);
    let bv = tape.value(params.bias);
    let mut z = Tensor::zeros(n, m_out);
    let targets: Vec<usize> = nbrs.edges().map(|(i, _)| i).collect();
    // per node: gather Σ_j φ_k(u_ij) y_j for each touched kernel, then apply W_k once
    let mut gathered = vec![0.0; k * m_in];
    let mut touched = vec![false; k];
    let mut list = Vec::with_capacity(k);
    let w = wv.data();
    for i in 0..n {
        for e in nbrs.offsets[i]..nbrs.offsets[i + 1] {
            let (index, value, _) = bases.edge(e);
            let yj = yv.row(nbrs.sources[e]);
            for (&kk, &phi) in index.iter().zip(value) {
                if phi == 0.0 {
                    continue;
                }
                if !touched[kk] {
                    touched[kk] = true;
                    list.push(kk);
                }
                for (g, &yq) in gathered[kk * m_in..(kk + 1) * m_in].iter_mut().zip(yj) {
                    *g += phi * yq;
                }
            }
        }
        let zi = z.row_mut(i);
        for &kk in &list {
            let g = &mut gathered[kk * m_in..(kk + 1) * m_in];
            let block = &w[kk * m_in * m_out..(kk + 1) * m_in * m_out];
            for (gq, wrow) in g.iter_mut().zip(block.chunks_exact(m_out)) {
                for (zp, wp) in zi.iter_mut().zip(wrow) {
                    *zp += *gq * wp;
                }
                *gq = 0.0;
            }
            touched[kk] = false;
        }
        list.clear();
    }
    for i in 0..n {
        for (zp, bp) in z.row_mut(i).iter_mut().zip(bv.data()) {
            *zp += bp;
        }
    }
    let op = ConvBackward {
        targets,
        sources: nbrs.sources.clone(),
        bases,
        u,
        d,
        m_in,
        m_out,
        coords_slot,
        gauss_slots,
    };
    let out = tape.custom(&inputs, z, Box::new(op))?;
    Ok(ConvOutput { out, clamped })
}

impl CustomBackward for ConvBackward {
    fn backward(&self, g: &Tensor, inputs: &[&Tensor], needs: &[bool]) -> Vec<Option<Tensor>> {
        let (y, w) = (inputs[0], inputs[1]);
        let (m_in, m_out, d) = (self.m_in, self.m_out, self.d);
        let mut dy = needs[0].then(|| Tensor::zeros(y.rows(), m_in));
        let mut dw = needs[1].then(|| Tensor::zeros(w.rows(), m_out));
        let db = needs[2].then(|| {
            let mut t = Tensor::zeros(1, m_out);
            for i in 0..g.rows() {
                for (a, b) in t.data_mut().iter_mut().zip(g.row(i)) {
                    *a += b;
                }
            }
            t
        });
        let want_coords = self.coords_slot.map_or(false, |s| needs[s]);
        let want_gauss = self.gauss_slots.map_or(false, |(a, b)| needs[a] || needs[b]);
        let need_phi_grad = want_coords || want_gauss;
        let need_wg = need_phi_grad || needs[0];
        let mut dx = self
            .coords_slot
            .filter(|&s| needs[s])
            .map(|s| Tensor::zeros(inputs[s].rows(), d));
        let (mut dmu, mut dlv) = match self.gauss_slots {
            Some((a, b)) => (
                needs[a].then(|| Tensor::zeros(inputs[a].rows(), d)),
                needs[b].then(|| Tensor::zeros(inputs[b].rows(), d)),
            ),
            None => (None, None),
        };
        let mut wg = vec![0.0; m_in];
        let mut du = vec![0.0; d];
        for e in 0..self.targets.len() {
            let (i, j) = (self.targets[e], self.sources[e]);
            let (index, value, grad_u) = self.bases.edge(e);
            let gi = g.row(i);
            let yj = y.row(j);
            du.iter_mut().for_each(|x| *x = 0.0);
            for (t, (&kk, &phi)) in index.iter().zip(value).enumerate() {
                if phi == 0.0 && !need_phi_grad {
                    continue;
                }
                // wg_q = Σ_p w_{kq p} g_ip
                for (q, wq) in wg.iter_mut().enumerate().take(if need_wg { m_in } else { 0 }) {
                    let wrow = w.row(kk * m_in + q);
                    *wq = wrow.iter().zip(gi).map(|(a, b)| a * b).sum();
                }
                if phi != 0.0 {
                    if let Some(dy) = dy.as_mut() {
                        for (a, b) in dy.row_mut(j).iter_mut().zip(&wg) {
                            *a += phi * b;
                        }
                    }
                    if let Some(dw) = dw.as_mut() {
                        for (q, &yq) in yj.iter().enumerate() {
                            let a = phi * yq;
                            for (r, gp) in dw.row_mut(kk * m_in + q).iter_mut().zip(gi) {
                                *r += a * gp;
                            }
                        }
                    }
                }
                if need_phi_grad {
                    let s: f64 = yj.iter().zip(&wg).map(|(a, b)| a * b).sum();
                    let gu = &grad_u[t * d..(t + 1) * d];
                    for c in 0..d {
                        du[c] += s * gu[c];
                    }
                    if let Some(dmu) = dmu.as_mut() {
                        for c in 0..d {
                            let v = dmu.get(kk, c) - s * gu[c];
                            dmu.set(kk, c, v);
                        }
                    }
                    if let (Some(dlv), Some((mu_s, lv_s))) = (dlv.as_mut(), self.gauss_slots) {
                        for c in 0..d {
                            let diff = self.u[e * d + c] - inputs[mu_s].get(kk, c);
                            let var = inputs[lv_s].get(kk, c).exp();
                            let v = dlv.get(kk, c) + s * phi * 0.5 * diff * diff / var;
                            dlv.set(kk, c, v);
                        }
                    }
                }
            }
            if let Some(dx) = dx.as_mut() {
                for c in 0..d {
                    dx.set(j, c, dx.get(j, c) + du[c]);
                    dx.set(i, c, dx.get(i, c) - du[c]);
                }
            }
        }
        let mut out = vec![dy, dw, db];
        if self.coords_slot.is_some() {
            out.push(dx);
        }
        if self.gauss_slots.is_some() {
            out.push(dmu);
            out.push(dlv);
        }
        out
    }
}
