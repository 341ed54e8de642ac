mod common;

use std::sync::Arc;

use common::*;
use meshpool::autodiff::{grad_check, Tape, Tensor, Var};
use meshpool::layers::*;
use meshpool::sparse::CsrMatrix;
use proptest::prelude::*;

const GAUSS4: KernelSpec = KernelSpec::Gaussian { count: 4 };
const SPLINE: KernelSpec = KernelSpec::BSpline { degree: 1, grid: 5 };

fn ring_case(kernel: &KernelSpec, seed: u64) -> ConvCase {
    let mut case = random_conv_case(seed, 8, 2, 3, kernel);
    let mut coords = Tensor::zeros(8, 3);
    for i in 0..8 {
        let a = std::f64::consts::TAU * i as f64 / 8.0;
        coords.set(i, 0, a.cos());
        coords.set(i, 1, a.sin());
        coords.set(i, 2, 0.1 * i as f64);
    }
    case.coords = coords;
    case.lists = (0..8).map(|i| vec![(i + 7) % 8, (i + 1) % 8, i]).collect();
    case
}

#[test]
fn ring_conv_matches_direct_sum() {
    for kernel in [GAUSS4, SPLINE] {
        for seed in 0..3 {
            let case = ring_case(&kernel, seed);
            let got = run_conv(&case, &kernel);
            let want = naive_conv(&case, &kernel);
            assert!(got.max_abs_diff(&want) < 1e-12, "{kernel:?}: {}", got.max_abs_diff(&want));
        }
    }
}

#[test]
fn random_graph_conv_matches_direct_sum() {
    for kernel in [GAUSS4, SPLINE, KernelSpec::BSpline { degree: 1, grid: 3 }] {
        let case = random_conv_case(11, 25, 3, 4, &kernel);
        let got = run_conv(&case, &kernel);
        assert!(got.max_abs_diff(&naive_conv(&case, &kernel)) < 1e-12);
    }
}

#[test]
fn single_node_self_edge_sums_weights() {
    let kernel = KernelSpec::Gaussian { count: 3 };
    let mut tape = Tape::new();
    let y = tape.constant(Tensor::from_vec(1, 2, vec![1.0, 1.0]).unwrap());
    let x = tape.constant(Tensor::from_vec(1, 3, vec![0.4, -0.2, 7.0]).unwrap());
    let w = Tensor::from_vec(6, 1, vec![0.5, -1.0, 2.0, 0.25, 3.0, -0.75]).unwrap();
    let params = ConvParams {
        weight: tape.constant(w.clone()),
        bias: tape.constant(Tensor::scalar(0.125)),
        mu: Some(tape.constant(Tensor::zeros(3, 3))),
        log_var: Some(tape.constant(Tensor::filled(3, 3, -1.3))),
    };
    let nb = Neighborhoods::from_lists(&[vec![0]]);
    let domain = KernelDomain::symmetric(&[1.0; 3]).unwrap();
    let out = geometric_conv(&mut tape, y, &nb, &PseudoCoords::Nodes(x), &params, &kernel, &domain).unwrap();
    let want = w.sum() + 0.125;
    assert!((tape.value(out.out).item() - want).abs() < 1e-14);
    assert_eq!(out.clamped, 0);
}

#[test]
fn precomputed_basis_matches_per_call_evaluation() {
    let case = random_conv_case(21, 30, 3, 4, &SPLINE);
    let nb = Neighborhoods::from_lists(&case.lists);
    let mut rel = Vec::new();
    for (i, j) in nb.edges() {
        for c in 0..3 {
            rel.push(case.coords.get(j, c) - case.coords.get(i, c));
        }
    }
    let rel = Tensor::from_vec(nb.n_edges(), 3, rel).unwrap();
    let basis = Arc::new(precompute_basis(&rel, &SPLINE, &case.domain).unwrap());
    assert_eq!(basis.n_edges(), nb.n_edges());
    let mut results = Vec::new();
    for coords in [PseudoCoords::Edges(rel.clone()), PseudoCoords::Basis(basis.clone())] {
        let mut tape = Tape::new();
        let y = tape.param(case.y.clone());
        let params = ConvParams {
            weight: tape.param(case.weight.clone()),
            bias: tape.param(case.bias.clone()),
            mu: None,
            log_var: None,
        };
        let out = geometric_conv(&mut tape, y, &nb, &coords, &params, &SPLINE, &case.domain).unwrap();
        let sq = tape.square(out.out).unwrap();
        let l = tape.reduce_sum(sq).unwrap();
        let g = tape.backward(l).unwrap();
        results.push((
            tape.value(out.out).clone(),
            out.clamped,
            g.get(y).unwrap().clone(),
            g.get(params.weight).unwrap().clone(),
        ));
    }
    let (a, b) = (&results[0], &results[1]);
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    assert_eq!(a.3, b.3);
}

#[test]
fn shared_node_coords_match_plain_node_coords() {
    let case = random_conv_case(22, 25, 3, 4, &SPLINE);
    let nb = Neighborhoods::from_lists(&case.lists);
    let run = |shared: bool| {
        let mut tape = Tape::new();
        let y = tape.param(case.y.clone());
        let x = tape.param(case.coords.clone());
        let coords = if shared { PseudoCoords::shared(x) } else { PseudoCoords::Nodes(x) };
        let params = ConvParams {
            weight: tape.param(case.weight.clone()),
            bias: tape.param(case.bias.clone()),
            mu: None,
            log_var: None,
        };
        // second convolution reuses whatever the first one cached
        let a = geometric_conv(&mut tape, y, &nb, &coords, &params, &SPLINE, &case.domain).unwrap();
        let b = geometric_conv(&mut tape, y, &nb, &coords, &params, &SPLINE, &case.domain).unwrap();
        let s = tape.add(a.out, b.out).unwrap();
        let sq = tape.square(s).unwrap();
        let l = tape.reduce_sum(sq).unwrap();
        let g = tape.backward(l).unwrap();
        (
            tape.value(s).clone(),
            a.clamped + b.clamped,
            g.get(x).unwrap().clone(),
            g.get(params.weight).unwrap().clone(),
        )
    };
    let (plain, shared) = (run(false), run(true));
    assert_eq!(plain.0, shared.0);
    assert_eq!(plain.1, shared.1);
    assert_eq!(plain.2, shared.2);
    assert_eq!(plain.3, shared.3);
}

#[test]
fn precomputed_basis_rejects_mismatches() {
    let rel = Tensor::zeros(4, 3);
    let domain = KernelDomain::symmetric(&[1.0; 3]).unwrap();
    assert!(precompute_basis(&rel, &GAUSS4, &domain).is_err());
    assert!(precompute_basis(&Tensor::zeros(4, 2), &SPLINE, &domain).is_err());
    let basis = Arc::new(precompute_basis(&rel, &SPLINE, &domain).unwrap());
    let mut tape = Tape::new();
    let y = tape.constant(Tensor::filled(2, 1, 1.0));
    let params = ConvParams {
        weight: tape.constant(Tensor::zeros(125, 1)),
        bias: tape.constant(Tensor::zeros(1, 1)),
        mu: None,
        log_var: None,
    };
    let three_edges = Neighborhoods::from_lists(&[vec![0, 1], vec![1]]);
    let four_edges = Neighborhoods::from_lists(&[vec![0, 1], vec![0, 1]]);
    let c = PseudoCoords::Basis(basis);
    assert!(geometric_conv(&mut tape, y, &three_edges, &c, &params, &SPLINE, &domain).is_err());
    let other = KernelDomain::symmetric(&[2.0; 3]).unwrap();
    assert!(geometric_conv(&mut tape, y, &four_edges, &c, &params, &SPLINE, &other).is_err());
    assert!(geometric_conv(&mut tape, y, &four_edges, &c, &params, &SPLINE, &domain).is_ok());
}

#[test]
fn zero_weights_give_bias() {
    let mut case = ring_case(&SPLINE, 4);
    case.weight = Tensor::zeros(case.weight.rows(), case.weight.cols());
    let z = run_conv(&case, &SPLINE);
    for i in 0..8 {
        assert_eq!(z.row(i), case.bias.row(0));
    }
}

fn conv_loss(
    tape: &mut Tape,
    case: &ConvCase,
    kernel: &KernelSpec,
    y: Var,
    x: Var,
    params: ConvParams,
) -> meshpool::Result<Var> {
    let nb = Neighborhoods::from_lists(&case.lists);
    let z = geometric_conv(tape, y, &nb, &PseudoCoords::Nodes(x), &params, kernel, &case.domain)?.out;
    let mut r = rng(99);
    let mix = tape.constant(random_tensor(&mut r, z.rows(), z.cols(), 1.0));
    let zz = tape.mul(z, mix)?;
    let sq = tape.square(zz)?;
    tape.reduce_sum(sq)
}

#[test]
fn gaussian_conv_gradients_match_finite_differences() {
    let case = random_conv_case(5, 8, 2, 3, &GAUSS4);
    let report = grad_check(
        |tape, v| {
            let params = ConvParams {
                weight: v[1],
                bias: v[2],
                mu: Some(v[4]),
                log_var: Some(v[5]),
            };
            conv_loss(tape, &case, &GAUSS4, v[0], v[3], params)
        },
        &[
            case.y.clone(),
            case.weight.clone(),
            case.bias.clone(),
            case.coords.clone(),
            case.mu.clone(),
            case.log_var.clone(),
        ],
        1e-6,
    )
    .unwrap();
    assert!(report.max_rel_error <= 1e-5, "{report:?}");
    assert!(report.per_param[4] <= 1e-7 && report.per_param[5] <= 1e-7, "{report:?}");
}

#[test]
fn spline_conv_gradients_match_finite_differences() {
    let case = random_conv_case(6, 8, 2, 3, &SPLINE);
    let report = grad_check(
        |tape, v| {
            let params = ConvParams {
                weight: v[1],
                bias: v[2],
                mu: None,
                log_var: None,
            };
            conv_loss(tape, &case, &SPLINE, v[0], v[3], params)
        },
        &[case.y.clone(), case.weight.clone(), case.bias.clone(), case.coords.clone()],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error <= 1e-5, "{report:?}");
}

#[test]
fn grid_two_spline_corners_and_centre() {
    let kernel = KernelSpec::BSpline { degree: 1, grid: 2 };
    let domain = KernelDomain::symmetric(&[1.0; 3]).unwrap();
    // weight row k holds the value k + 1 so the output identifies the kernel mix
    let w = Tensor::from_vec(8, 1, (1..=8).map(f64::from).collect()).unwrap();
    let eval = |u: [f64; 3]| {
        let mut tape = Tape::new();
        let y = tape.constant(Tensor::scalar(1.0));
        let params = ConvParams {
            weight: tape.constant(w.clone()),
            bias: tape.constant(Tensor::scalar(0.0)),
            mu: None,
            log_var: None,
        };
        let nb = Neighborhoods::from_lists(&[vec![0]]);
        let coords = PseudoCoords::Edges(Tensor::from_vec(1, 3, u.to_vec()).unwrap());
        let out = geometric_conv(&mut tape, y, &nb, &coords, &params, &kernel, &domain).unwrap();
        (tape.value(out.out).item(), out.clamped)
    };
    assert_eq!(eval([-1.0, -1.0, -1.0]), (1.0, 0));
    assert_eq!(eval([1.0, 1.0, 1.0]), (8.0, 0));
    assert_eq!(eval([-1.0, -1.0, 1.0]), (2.0, 0));
    assert_eq!(eval([1.0, -1.0, -1.0]), (5.0, 0));
    let (centre, _) = eval([0.0, 0.0, 0.0]);
    assert!((centre - 4.5).abs() < 1e-14);
    assert_eq!(eval([-3.0, -1.0, 2.0]), (2.0, 2));
}

#[test]
fn one_dimensional_grid_is_a_discrete_convolution() {
    let n = 12;
    let kernel = KernelSpec::BSpline { degree: 1, grid: 3 };
    let domain = KernelDomain::symmetric(&[1.0]).unwrap();
    let signal: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
    let taps = [0.3, -1.1, 0.7];
    let lists: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut l = Vec::new();
            if i > 0 {
                l.push(i - 1);
            }
            if i + 1 < n {
                l.push(i + 1);
            }
            l.push(i);
            l
        })
        .collect();
    let mut tape = Tape::new();
    let y = tape.constant(Tensor::from_vec(n, 1, signal.clone()).unwrap());
    let x = tape.constant(Tensor::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap());
    let params = ConvParams {
        weight: tape.constant(Tensor::from_vec(3, 1, taps.to_vec()).unwrap()),
        bias: tape.constant(Tensor::scalar(0.0)),
        mu: None,
        log_var: None,
    };
    let nb = Neighborhoods::from_lists(&lists);
    let out = geometric_conv(&mut tape, y, &nb, &PseudoCoords::Nodes(x), &params, &kernel, &domain).unwrap();
    let z = tape.value(out.out);
    for i in 0..n {
        let at = |j: isize| if j < 0 || j >= n as isize { 0.0 } else { signal[j as usize] };
        let i = i as isize;
        let want = taps[0] * at(i - 1) + taps[1] * at(i) + taps[2] * at(i + 1);
        assert!((z.get(i as usize, 0) - want).abs() < 1e-14);
    }
}

#[test]
fn conv_rejects_bad_shapes() {
    let case = ring_case(&SPLINE, 1);
    let mut tape = Tape::new();
    let y = tape.constant(case.y.clone());
    let x = tape.constant(case.coords.clone());
    let params = ConvParams {
        weight: tape.constant(Tensor::zeros(7, 3)),
        bias: tape.constant(Tensor::zeros(1, 3)),
        mu: None,
        log_var: None,
    };
    let nb = Neighborhoods::from_lists(&case.lists);
    assert!(geometric_conv(&mut tape, y, &nb, &PseudoCoords::Nodes(x), &params, &SPLINE, &case.domain).is_err());
    let bad = PseudoCoords::Edges(Tensor::zeros(3, 3));
    let params = ConvParams {
        weight: tape.constant(case.weight.clone()),
        ..params
    };
    assert!(geometric_conv(&mut tape, y, &nb, &bad, &params, &SPLINE, &case.domain).is_err());
    assert!(geometric_conv(&mut tape, y, &nb, &PseudoCoords::Nodes(x), &params, &GAUSS4, &case.domain).is_err());
}

fn pooled(s: &Tensor, y: &Tensor, a: &Arc<CsrMatrix>, u: &Tensor) -> (Tensor, Tensor, Tensor, usize) {
    let mut tape = Tape::new();
    let sv = tape.constant(s.clone());
    let yv = tape.constant(y.clone());
    let uv = tape.constant(u.clone());
    let yp = pool_features(&mut tape, sv, yv).unwrap();
    let ap = pool_adjacency(&mut tape, sv, a).unwrap();
    let pc = pool_coords(&mut tape, sv, uv).unwrap();
    (
        tape.value(yp).clone(),
        tape.value(ap).clone(),
        tape.value(pc.coords).clone(),
        pc.empty,
    )
}

#[test]
fn identity_assignment_pools_to_itself() {
    let g = random_graph(10, 8, 1);
    let mut r = rng(2);
    let y = random_tensor(&mut r, 10, 4, 1.0);
    let u = random_tensor(&mut r, 10, 3, 1.0);
    let (yp, ap, up, empty) = pooled(&Tensor::identity(10), &y, g.adjacency(), &u);
    assert_eq!(yp.max_abs_diff(&y), 0.0);
    assert_eq!(ap.max_abs_diff(&g.adjacency().to_dense()), 0.0);
    assert!(up.max_abs_diff(&u) < 1e-15);
    assert_eq!(empty, 0);
}

#[test]
fn single_cluster_pools_to_totals() {
    let g = random_graph(15, 10, 3);
    let mut r = rng(4);
    let y = random_tensor(&mut r, 15, 2, 1.0);
    let u = random_tensor(&mut r, 15, 3, 1.0);
    let (yp, ap, up, _) = pooled(&Tensor::filled(15, 1, 1.0), &y, g.adjacency(), &u);
    for q in 0..2 {
        let s: f64 = (0..15).map(|i| y.get(i, q)).sum();
        assert!((yp.get(0, q) - s).abs() < 1e-13);
    }
    assert!((ap.item() - g.total_weight()).abs() < 1e-12);
    for c in 0..3 {
        let m: f64 = (0..15).map(|i| u.get(i, c)).sum::<f64>() / 15.0;
        assert!((up.get(0, c) - m).abs() < 1e-14);
    }
}

#[test]
fn random_pooling_matches_explicit_loops() {
    let g = random_graph(30, 40, 5);
    let mut r = rng(6);
    let s = random_assignment(&mut r, 30, 6);
    let y = random_tensor(&mut r, 30, 5, 1.0);
    let u = random_tensor(&mut r, 30, 3, 1.0);
    let (yp, ap, up, _) = pooled(&s, &y, g.adjacency(), &u);
    assert!(yp.max_abs_diff(&naive_tn(&s, &y)) < 1e-12);
    let a = g.adjacency().to_dense();
    assert!(ap.max_abs_diff(&naive_sas(&s, &a)) < 1e-12);
    let num = naive_tn(&s, &u);
    for c in 0..6 {
        let mass: f64 = (0..30).map(|i| s.get(i, c)).sum();
        for k in 0..3 {
            assert!((up.get(c, k) - num.get(c, k) / mass).abs() < 1e-12);
        }
    }
}

#[test]
fn pooled_adjacency_is_symmetric_and_conserves_mass() {
    for seed in 0..5 {
        let g = random_graph(25, 30, seed);
        let s = random_assignment(&mut rng(seed + 100), 25, 4);
        let (_, ap, _, _) = pooled(&s, &Tensor::zeros(25, 1), g.adjacency(), &Tensor::zeros(25, 3));
        for p in 0..4 {
            for q in 0..4 {
                assert!((ap.get(p, q) - ap.get(q, p)).abs() < 1e-12);
            }
        }
        assert!((ap.sum() - g.total_weight()).abs() < 1e-10);
    }
}

#[test]
fn one_hot_coords_are_cluster_means() {
    let labels = [0, 1, 0, 2, 1, 0];
    let s = one_hot(&labels, 3).unwrap();
    let u = Tensor::from_vec(6, 1, vec![1.0, 10.0, 2.0, 5.0, 20.0, 3.0]).unwrap();
    let g = random_graph(6, 2, 0);
    let (_, _, up, empty) = pooled(&s, &u, g.adjacency(), &u);
    assert_eq!(up.data(), &[2.0, 15.0, 5.0]);
    assert_eq!(empty, 0);
    assert_eq!(hard_labels(&s), labels);
}

#[test]
fn uniform_assignment_gives_global_mean_everywhere() {
    let mut r = rng(8);
    let u = random_tensor(&mut r, 9, 3, 2.0);
    let s = Tensor::filled(9, 4, 0.25);
    let g = random_graph(9, 3, 1);
    let (_, _, up, _) = pooled(&s, &u, g.adjacency(), &u);
    for c in 0..4 {
        for k in 0..3 {
            let m: f64 = (0..9).map(|i| u.get(i, k)).sum::<f64>() / 9.0;
            assert!((up.get(c, k) - m).abs() < 1e-14);
        }
    }
}

#[test]
fn empty_cluster_gets_zero_coords() {
    let s = one_hot(&[0, 0, 2, 2], 3).unwrap();
    let u = Tensor::from_vec(4, 2, vec![1.0, 1.0, 3.0, 3.0, -1.0, 0.0, -3.0, 2.0]).unwrap();
    let g = random_graph(4, 1, 2);
    let (_, ap, up, empty) = pooled(&s, &u, g.adjacency(), &u);
    assert_eq!(empty, 1);
    assert_eq!(up.row(1), &[0.0, 0.0]);
    assert_eq!(up.row(0), &[2.0, 2.0]);
    let mass = [2.0, 0.0, 2.0];
    let nb = pooled_neighborhoods(&ap, &mass);
    assert!(nb.neighbors(1).is_empty());
    assert_eq!(*nb.neighbors(0).last().unwrap(), 0);
    assert!(nb.neighbors(0).iter().all(|&j| j != 1));
}

#[test]
fn pooled_neighborhoods_follow_adjacency() {
    let a = Tensor::from_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.5], vec![0.0, 0.5, 2.0]]).unwrap();
    let nb = pooled_neighborhoods(&a, &[1.0, 1.0, 1.0]);
    assert_eq!(nb.neighbors(0), &[1, 0]);
    assert_eq!(nb.neighbors(1), &[0, 2, 1]);
    assert_eq!(nb.neighbors(2), &[1, 2]);
}

fn reg_value(s: &Tensor, g: &meshpool::mesh::WeightedGraph) -> f64 {
    let mut tape = Tape::new();
    let sv = tape.constant(s.clone());
    let r = laplacian_reg(&mut tape, sv, g).unwrap();
    tape.value(r).item()
}

#[test]
fn laplacian_reg_small_cases() {
    let g = random_graph(7, 5, 3);
    assert_eq!(reg_value(&Tensor::filled(7, 3, 1.0 / 3.0), &g), 0.0);
    let two = meshpool::mesh::WeightedGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
    let s = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert!((reg_value(&s, &two) - 4.0).abs() < 1e-15);
}

#[test]
fn laplacian_reg_matches_trace_form() {
    for seed in 0..4 {
        let g = random_graph(40, 60, seed);
        let s = random_assignment(&mut rng(seed + 7), 40, 5);
        let want = dense_trace_reg(&s, &g.adjacency().to_dense());
        assert!((reg_value(&s, &g) - want).abs() < 1e-10 * want.abs().max(1.0));
    }
}

#[test]
fn pooling_chain_gradients_match_finite_differences() {
    let g = random_graph(12, 10, 9);
    let mut r = rng(10);
    let logits = random_tensor(&mut r, 12, 3, 1.0);
    let y = random_tensor(&mut r, 12, 2, 1.0);
    let u = random_tensor(&mut r, 12, 3, 1.0);
    let a = g.adjacency().clone();
    let report = grad_check(
        |tape, v| {
            let s = tape.row_softmax(v[0])?;
            let yp = pool_features(tape, s, v[1])?;
            let ap = pool_adjacency(tape, s, &a)?;
            let pc = pool_coords(tape, s, v[2])?;
            let reg = laplacian_reg(tape, s, &g)?;
            let mut terms = Vec::new();
            for t in [yp, ap, pc.coords] {
                let sq = tape.square(t)?;
                terms.push(tape.reduce_sum(sq)?);
            }
            let mut total = tape.scale(reg, 0.3)?;
            for t in terms {
                total = tape.add(total, t)?;
            }
            Ok(total)
        },
        &[logits, y, u],
        1e-6,
    )
    .unwrap();
    assert!(report.max_rel_error <= 1e-6, "{report:?}");
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(t.rows(), t.cols());
    for (new, &old) in perm.iter().enumerate() {
        out.row_mut(new).copy_from_slice(t.row(old));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pooling_is_node_permutation_invariant(seed in 0u64..1000, n in 5usize..30, c in 1usize..6) {
        let g = random_graph(n, n, seed);
        let mut r = rng(seed ^ 0xabc);
        let s = random_assignment(&mut r, n, c);
        let y = random_tensor(&mut r, n, 3, 1.0);
        let u = random_tensor(&mut r, n, 3, 1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);
        // node i becomes perm[i], so new row k holds old row inv[k]
        let gp = g.permuted(&perm).unwrap();
        let mut rows = vec![0; n];
        for (old, &new) in perm.iter().enumerate() {
            rows[new] = old;
        }
        let (y1, a1, u1, _) = pooled(&s, &y, g.adjacency(), &u);
        let (y2, a2, u2, _) = pooled(&permute_rows(&s, &rows), &permute_rows(&y, &rows), gp.adjacency(), &permute_rows(&u, &rows));
        prop_assert!(y1.max_abs_diff(&y2) < 1e-12);
        prop_assert!(a1.max_abs_diff(&a2) < 1e-12);
        prop_assert!(u1.max_abs_diff(&u2) < 1e-12);
        let r1 = reg_value(&s, &g);
        let r2 = reg_value(&permute_rows(&s, &rows), &gp);
        prop_assert!((r1 - r2).abs() < 1e-10 * r1.max(1.0));
    }

    #[test]
    fn softmax_assignment_rows_sum_to_one(seed in 0u64..1000, n in 1usize..20, c in 1usize..17, scale in 0.1f64..50.0) {
        let mut tape = Tape::new();
        let x = tape.constant(random_tensor(&mut rng(seed), n, c, scale));
        let s = tape.row_softmax(x).unwrap();
        let sv = tape.value(s);
        for i in 0..n {
            let row = sv.row(i);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
