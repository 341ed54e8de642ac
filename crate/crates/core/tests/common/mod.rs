#![allow(dead_code)]

pub mod ami_oracle;

use meshpool::autodiff::{Tape, Tensor};
use meshpool::layers::{geometric_conv, ConvParams, KernelDomain, KernelSpec, Neighborhoods, PseudoCoords};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Row-stochastic random matrix.
pub fn random_assignment(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Tensor {
    let mut t = Tensor::zeros(n, c);
    for i in 0..n {
        let row: Vec<f64> = (0..c).map(|_| rng.gen_range(0.01..1.0)).collect();
        let s: f64 = row.iter().sum();
        for (k, v) in row.iter().enumerate() {
            t.set(i, k, v / s);
        }
    }
    t
}

pub struct ConvCase {
    pub y: Tensor,
    pub lists: Vec<Vec<usize>>,
    pub coords: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
    pub mu: Tensor,
    pub log_var: Tensor,
    pub domain: KernelDomain,
}

/// Random graph of `n` nodes in 3D; each node sees a few random others plus itself.
pub fn random_conv_case(seed: u64, n: usize, m_in: usize, m_out: usize, kernel: &KernelSpec) -> ConvCase {
    let mut r = rng(seed);
    let d = 3;
    let k = kernel.n_kernels(d);
    let coords = random_tensor(&mut r, n, d, 1.0);
    let lists = (0..n)
        .map(|i| {
            let mut l: Vec<usize> = (0..r.gen_range(1..5)).map(|_| r.gen_range(0..n)).filter(|&j| j != i).collect();
            l.sort();
            l.dedup();
            l.push(i);
            l
        })
        .collect();
    ConvCase {
        y: random_tensor(&mut r, n, m_in, 1.0),
        lists,
        coords,
        weight: random_tensor(&mut r, k * m_in, m_out, 0.5),
        bias: random_tensor(&mut r, 1, m_out, 0.5),
        mu: random_tensor(&mut r, k, d, 1.0),
        log_var: random_tensor(&mut r, k, d, 0.5),
        domain: KernelDomain::symmetric(&[1.5, 1.5, 1.5]).unwrap(),
    }
}

/// Textbook kernel value: hat-function products or the Gaussian formula.
pub fn naive_kernel(kernel: &KernelSpec, k: usize, u: &[f64], case: &ConvCase) -> f64 {
    match *kernel {
        KernelSpec::BSpline { degree: 1, grid } => {
            let mut idx = vec![0; u.len()];
            let mut rem = k;
            for c in (0..u.len()).rev() {
                idx[c] = rem % grid;
                rem /= grid;
            }
            let mut v = 1.0;
            for c in 0..u.len() {
                let t = ((u[c] - case.domain.lo[c]) / (case.domain.hi[c] - case.domain.lo[c])).clamp(0.0, 1.0);
                let s = t * (grid - 1) as f64;
                v *= (1.0 - (s - idx[c] as f64).abs()).max(0.0);
            }
            v
        }
        KernelSpec::Gaussian { .. } => {
            let mut q = 0.0;
            for c in 0..u.len() {
                q += (u[c] - case.mu.get(k, c)).powi(2) / case.log_var.get(k, c).exp();
            }
            (-0.5 * q).exp()
        }
        _ => unimplemented!("oracle covers degree-1 splines and Gaussians"),
    }
}

/// Direct evaluation of the convolution sum, one output entry at a time.
pub fn naive_conv(case: &ConvCase, kernel: &KernelSpec) -> Tensor {
    let n = case.y.rows();
    let m_in = case.y.cols();
    let m_out = case.weight.cols();
    let k_total = kernel.n_kernels(3);
    let mut z = Tensor::zeros(n, m_out);
    for i in 0..n {
        for p in 0..m_out {
            let mut acc = case.bias.get(0, p);
            for &j in &case.lists[i] {
                let u: Vec<f64> = (0..3).map(|c| case.coords.get(j, c) - case.coords.get(i, c)).collect();
                for q in 0..m_in {
                    for k in 0..k_total {
                        acc += case.weight.get(k * m_in + q, p) * case.y.get(j, q) * naive_kernel(kernel, k, &u, case);
                    }
                }
            }
            z.set(i, p, acc);
        }
    }
    z
}

pub fn run_conv(case: &ConvCase, kernel: &KernelSpec) -> Tensor {
    let mut tape = Tape::new();
    let y = tape.constant(case.y.clone());
    let x = tape.constant(case.coords.clone());
    let gauss = matches!(kernel, KernelSpec::Gaussian { .. });
    let params = ConvParams {
        weight: tape.constant(case.weight.clone()),
        bias: tape.constant(case.bias.clone()),
        mu: gauss.then(|| tape.constant(case.mu.clone())),
        log_var: gauss.then(|| tape.constant(case.log_var.clone())),
    };
    let nb = Neighborhoods::from_lists(&case.lists);
    let out = geometric_conv(&mut tape, y, &nb, &PseudoCoords::Nodes(x), &params, kernel, &case.domain).unwrap();
    tape.value(out.out).clone()
}

/// Dense `Sᵀ M` by explicit loops.
pub fn naive_tn(s: &Tensor, m: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(s.cols(), m.cols());
    for c in 0..s.cols() {
        for q in 0..m.cols() {
            let mut acc = 0.0;
            for i in 0..s.rows() {
                acc += s.get(i, c) * m.get(i, q);
            }
            out.set(c, q, acc);
        }
    }
    out
}

/// Dense `Sᵀ A S` by explicit loops.
pub fn naive_sas(s: &Tensor, a: &Tensor) -> Tensor {
    let n = s.rows();
    let c = s.cols();
    let mut out = Tensor::zeros(c, c);
    for p in 0..c {
        for q in 0..c {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += s.get(i, p) * a.get(i, j) * s.get(j, q);
                }
            }
            out.set(p, q, acc);
        }
    }
    out
}

/// `2·tr(Sᵀ (D − A) S)` with dense matrices.
pub fn dense_trace_reg(s: &Tensor, a: &Tensor) -> f64 {
    let n = s.rows();
    let mut lap = Tensor::zeros(n, n);
    for i in 0..n {
        let deg: f64 = (0..n).map(|j| a.get(i, j)).sum();
        for j in 0..n {
            lap.set(i, j, if i == j { deg } else { 0.0 } - a.get(i, j));
        }
    }
    let ls = lap.matmul(s).unwrap();
    let m = s.matmul_tn(&ls).unwrap();
    2.0 * (0..m.rows()).map(|c| m.get(c, c)).sum::<f64>()
}

/// Connected random graph: a random spanning tree plus `extra` chords.
pub fn random_graph(n: usize, extra: usize, seed: u64) -> meshpool::mesh::WeightedGraph {
    let mut r = rng(seed);
    let mut edges = std::collections::BTreeMap::new();
    for i in 1..n {
        let j = r.gen_range(0..i);
        edges.insert((j, i), r.gen_range(0.2..2.0));
    }
    for _ in 0..extra {
        let (a, b) = (r.gen_range(0..n), r.gen_range(0..n));
        if a != b {
            edges.insert((a.min(b), a.max(b)), r.gen_range(0.2..2.0));
        }
    }
    let list: Vec<_> = edges.into_iter().map(|((i, j), w)| (i, j, w)).collect();
    meshpool::mesh::WeightedGraph::from_edges(n, &list).unwrap()
}

/// Model inputs for `meshes`, all aligned to the first one.
pub fn prepare_inputs(
    meshes: &[meshpool::mesh::SurfaceMesh],
    config: &meshpool::model::ModelConfig,
) -> Vec<meshpool::model::MeshInput> {
    use meshpool::spectral::{align_to_reference, embed_mesh, EigenOptions};
    let names: Vec<String> = meshpool::mesh::FIELD_NAMES.iter().map(|s| s.to_string()).collect();
    let mut reference = None;
    meshes
        .iter()
        .map(|m| {
            let (g, emb) = embed_mesh(m, meshpool::mesh::DEFAULT_EPSILON, &EigenOptions::default()).unwrap();
            let aligned = match &reference {
                None => {
                    let r = emb.into_reference();
                    reference = Some(r.clone());
                    r
                }
                Some(r) => align_to_reference(&emb, r, 50, 1e-9).unwrap().0,
            };
            meshpool::model::MeshInput::new(m, g, &aligned, &names, config).unwrap()
        })
        .collect()
}

/// Blob mesh with random input fields and parcels from coordinate octants.
pub fn field_mesh(n: usize, seed: u64) -> meshpool::mesh::SurfaceMesh {
    let mut m = meshpool::mesh::gen_synthetic_mesh(meshpool::mesh::MeshKind::Blob, n, seed).unwrap();
    let mut r = rng(seed ^ 0x77);
    for name in meshpool::mesh::FIELD_NAMES {
        let v = (0..m.n_vertices()).map(|_| r.gen_range(-1.0..1.0)).collect();
        m.set_field(name, v);
    }
    m.parcels = Some(
        m.vertices
            .iter()
            .map(|p| (p[0] > 0.0) as usize + 2 * (p[1] > 0.0) as usize + 4 * (p[2] > 0.0) as usize)
            .collect(),
    );
    m
}
