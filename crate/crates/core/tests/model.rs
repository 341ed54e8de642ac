mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::*;
use meshpool::autodiff::{grad_check, Tape, Tensor};
use meshpool::layers::{pool_features, KernelSpec};
use meshpool::mesh::{Target, TaskKind, DEFAULT_EPSILON};
use meshpool::model::*;
use meshpool::spectral::{embed_mesh, EigenOptions, SpectralEmbedding};
use meshpool::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn state_for(inputs: &[MeshInput], config: &ModelConfig, seed: u64) -> ModelState {
    let refs: Vec<&MeshInput> = inputs.iter().collect();
    let (d1, d2) = fit_domains(&refs).unwrap();
    ModelState::init(config, [d1, d2], seed).unwrap()
}

fn run(state: &ModelState, input: &MeshInput) -> (Tensor, Option<Tensor>, Option<Tensor>, Diagnostics) {
    let mut tape = Tape::new();
    let p = state.bind_frozen(&mut tape);
    let f = forward(&mut tape, input, state, &p).unwrap();
    (
        tape.value(f.output).clone(),
        f.s1.map(|s| tape.value(s).clone()),
        f.s2.map(|s| tape.value(s).clone()),
        f.diagnostics,
    )
}

const ALL_MODES: [PoolingMode; 4] = [
    PoolingMode::Learnable,
    PoolingMode::GlobalAverage,
    PoolingMode::FixedParcellation,
    PoolingMode::SpectralKmeans,
];

#[test]
fn zero_network_collapses_to_output_bias() {
    for pooling in ALL_MODES {
        let config = ModelConfig {
            pooling,
            ..Default::default()
        };
        let inputs = prepare_inputs(&[field_mesh(120, 1)], &config);
        let mut state = state_for(&inputs, &config, 3);
        for t in state.params.values_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        state.params.insert("fc2.bias".into(), Tensor::from_vec(1, 2, vec![0.25, -1.5]).unwrap());
        let (out, _, _, _) = run(&state, &inputs[0]);
        assert_eq!(out.data(), &[0.25, -1.5], "{pooling:?}");
    }
}

#[test]
fn uniform_logits_give_ln_two_and_exact_regression_gives_zero() {
    let config = ModelConfig::default();
    let inputs = prepare_inputs(&[field_mesh(100, 2)], &config);
    let mut state = state_for(&inputs, &config, 0);
    for t in state.params.values_mut() {
        t.data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    let mut tape = Tape::new();
    let p = state.bind_frozen(&mut tape);
    let f = forward(&mut tape, &inputs[0], &state, &p).unwrap();
    let l = loss(&mut tape, &f, &Target::Class(1), &inputs[0], &config).unwrap();
    assert!((tape.value(l.total).item() - std::f64::consts::LN_2).abs() < 1e-15);
    assert_eq!(tape.value(l.regularizer.unwrap()).item(), 0.0);

    let rconfig = ModelConfig {
        task: TaskKind::Regress,
        n_outputs: 3,
        ..Default::default()
    };
    let mut state = state_for(&inputs, &rconfig, 0);
    for t in state.params.values_mut() {
        t.data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    let target = vec![0.1, 0.7, 0.2];
    state.params.insert("fc2.bias".into(), Tensor::from_vec(1, 3, target.clone()).unwrap());
    let mut tape = Tape::new();
    let p = state.bind_frozen(&mut tape);
    let f = forward(&mut tape, &inputs[0], &state, &p).unwrap();
    let l = loss(&mut tape, &f, &Target::Values(target), &inputs[0], &rconfig).unwrap();
    assert_eq!(tape.value(l.total).item(), 0.0);
}

#[test]
fn loss_rejects_mismatched_targets() {
    let config = ModelConfig::default();
    let inputs = prepare_inputs(&[field_mesh(60, 3)], &config);
    let state = state_for(&inputs, &config, 0);
    let mut tape = Tape::new();
    let p = state.bind_frozen(&mut tape);
    let f = forward(&mut tape, &inputs[0], &state, &p).unwrap();
    assert!(matches!(
        loss(&mut tape, &f, &Target::Class(2), &inputs[0], &config),
        Err(Error::Argument(_))
    ));
    assert!(matches!(
        loss(&mut tape, &f, &Target::Values(vec![0.0, 1.0]), &inputs[0], &config),
        Err(Error::Argument(_))
    ));
}

#[test]
fn alpha_adds_the_regularizer() {
    let mut config = ModelConfig {
        alpha: 0.0,
        ..Default::default()
    };
    let inputs = prepare_inputs(&[field_mesh(150, 4)], &config);
    let state = state_for(&inputs, &config, 5);
    let eval = |config: &ModelConfig| {
        let mut tape = Tape::new();
        let p = state.bind_frozen(&mut tape);
        let f = forward(&mut tape, &inputs[0], &state, &p).unwrap();
        let l = loss(&mut tape, &f, &Target::Class(0), &inputs[0], config).unwrap();
        (tape.value(l.total).item(), tape.value(l.regularizer.unwrap()).item())
    };
    let (l0, reg) = eval(&config);
    config.alpha = 1.0;
    let (l1, reg1) = eval(&config);
    assert_eq!(reg, reg1);
    assert!(reg > 0.0);
    assert!(((l1 - l0) - reg).abs() <= 1e-12 * l1.abs());
}

#[test]
fn learnable_forward_shapes_and_assignments() {
    let config = ModelConfig::default();
    let inputs = prepare_inputs(&[field_mesh(200, 6)], &config);
    let state = state_for(&inputs, &config, 1);
    let (out, s1, s2, diag) = run(&state, &inputs[0]);
    assert_eq!(out.shape(), (1, 2));
    let s1 = s1.unwrap();
    assert_eq!(s1.shape(), (200, 16));
    for i in 0..200 {
        assert!((s1.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let s2 = s2.unwrap();
    assert_eq!(s2.shape(), (16, 1));
    assert!(s2.data().iter().all(|&v| v == 1.0));
    assert_eq!(diag.empty_clusters, 0);
}

#[test]
fn every_pooling_mode_runs_and_has_its_parameter_set() {
    for pooling in ALL_MODES {
        let config = ModelConfig {
            pooling,
            ..Default::default()
        };
        let inputs = prepare_inputs(&[field_mesh(150, 7), field_mesh(170, 8)], &config);
        let state = state_for(&inputs, &config, 2);
        let names: BTreeSet<String> = state.params.keys().cloned().collect();
        let has_clusters = names.contains("block1.clust.weight");
        assert_eq!(has_clusters, pooling == PoolingMode::Learnable);
        assert_eq!(
            state.params["fc1.weight"].rows(),
            config.fc_input_width(),
            "{pooling:?}"
        );
        for input in &inputs {
            let (out, _, _, _) = run(&state, input);
            assert!(out.is_finite());
        }
        let again = state_for(&inputs, &config, 99);
        assert_eq!(names, again.params.keys().cloned().collect());
    }
}

#[test]
fn gaussian_kernels_and_deeper_cluster_paths_run() {
    let config = ModelConfig {
        kernel: KernelSpec::Gaussian { count: 6 },
        cluster_depth: 2,
        ..Default::default()
    };
    let inputs = prepare_inputs(&[field_mesh(80, 9)], &config);
    let state = state_for(&inputs, &config, 4);
    assert!(state.params.contains_key("block1.clust.1.mu"));
    assert!(state.params.contains_key("block2.feat.log_var"));
    let (out, s1, _, _) = run(&state, &inputs[0]);
    assert!(out.is_finite());
    assert!(s1.unwrap().is_finite());
}

fn full_network_check(config: &ModelConfig, n: usize, seed: u64, h: f64) -> meshpool::autodiff::GradCheckReport {
    let inputs = prepare_inputs(&[field_mesh(n, seed)], config);
    let state = state_for(&inputs, config, seed);
    let names = state.param_names();
    let target = match config.task {
        TaskKind::Classify => Target::Class(1),
        TaskKind::Regress => Target::Values(vec![0.3; config.n_outputs]),
    };
    grad_check(
        |tape, vars| {
            let p = ParamVars::from_vars(&names, vars);
            let f = forward(tape, &inputs[0], &state, &p)?;
            Ok(loss(tape, &f, &target, &inputs[0], config)?.total)
        },
        &state.param_tensors(),
        h,
    )
    .unwrap()
}

#[test]
fn full_network_gradients_match_finite_differences() {
    let start = Instant::now();
    let config = ModelConfig {
        alpha: 0.1,
        ..Default::default()
    };
    let report = full_network_check(&config, 30, 11, 1e-6);
    assert!(report.max_norm_error <= 1e-4, "{report:?}");
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn baseline_and_regression_gradients_match_finite_differences() {
    for pooling in [PoolingMode::GlobalAverage, PoolingMode::FixedParcellation, PoolingMode::SpectralKmeans] {
        let config = ModelConfig {
            pooling,
            task: TaskKind::Regress,
            n_outputs: 3,
            ..Default::default()
        };
        let report = full_network_check(&config, 40, 12, 1e-6);
        assert!(report.max_norm_error <= 1e-4, "{pooling:?} {report:?}");
    }
    let config = ModelConfig {
        kernel: KernelSpec::Gaussian { count: 6 },
        ..Default::default()
    };
    let report = full_network_check(&config, 30, 13, 1e-6);
    assert!(report.max_norm_error <= 1e-4, "{report:?}");
}

/// Inputs for a mesh and for the same mesh with nodes relabelled by `order`
/// (new node `k` is old node `order[k]`).
fn permuted_pair(n: usize, seed: u64, config: &ModelConfig) -> (MeshInput, MeshInput) {
    let mesh = field_mesh(n, seed);
    let (g, emb) = embed_mesh(&mesh, DEFAULT_EPSILON, &EigenOptions::default()).unwrap();
    let emb: SpectralEmbedding = emb.into_reference();
    let fields: Vec<Vec<f64>> = meshpool::mesh::FIELD_NAMES
        .iter()
        .map(|f| mesh.field(f).unwrap().to_vec())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed + 1));
    let mut new_of = vec![0; n];
    for (k, &old) in order.iter().enumerate() {
        new_of[old] = k;
    }
    let gp = g.permuted(&new_of).unwrap();
    let ep = emb.select_rows(&order);
    let fp: Vec<Vec<f64>> = fields.iter().map(|f| order.iter().map(|&o| f[o]).collect()).collect();
    let parcels = mesh.parcels.clone().unwrap();
    let pp: Vec<usize> = order.iter().map(|&o| parcels[o]).collect();
    (
        MeshInput::from_parts(g, &emb, &fields, Some(parcels), config).unwrap(),
        MeshInput::from_parts(gp, &ep, &fp, Some(pp), config).unwrap(),
    )
}

#[test]
fn node_permutation_leaves_output_unchanged() {
    for seed in 0..5 {
        let config = ModelConfig::default();
        let (a, b) = permuted_pair(150 + 10 * seed as usize, seed, &config);
        let state = state_for(&[a.clone()], &config, seed);
        let (oa, ..) = run(&state, &a);
        let (ob, ..) = run(&state, &b);
        assert!(oa.max_abs_diff(&ob) <= 1e-9, "{}", oa.max_abs_diff(&ob));
    }
}

#[test]
fn summed_pooling_is_n_times_the_global_average() {
    let mut r = rng(21);
    let n = 57;
    let y = random_tensor(&mut r, n, 16, 2.0);
    let mut tape = Tape::new();
    let yv = tape.constant(y.clone());
    let ones = tape.constant(Tensor::filled(n, 1, 1.0));
    let sum = pool_features(&mut tape, ones, yv).unwrap();
    let mean = baseline_global_average(&mut tape, yv).unwrap();
    for q in 0..16 {
        let ratio = tape.value(sum).get(0, q) / tape.value(mean).get(0, q);
        assert!((ratio - n as f64).abs() < 1e-9);
        let oracle = (0..n).map(|i| y.get(i, q)).sum::<f64>() / n as f64;
        assert!((tape.value(mean).get(0, q) - oracle).abs() < 1e-14);
    }
}

#[test]
fn fixed_parcellation_baseline_cases() {
    let mut r = rng(22);
    let y = random_tensor(&mut r, 12, 3, 1.0);
    let mut tape = Tape::new();
    let yv = tape.constant(y.clone());
    let one = baseline_fixed_parcellation(&mut tape, yv, &[0; 12], 1).unwrap();
    let mean = baseline_global_average(&mut tape, yv).unwrap();
    assert!(tape.value(one).max_abs_diff(tape.value(mean)) < 1e-15);
    let ids: Vec<usize> = (0..12).collect();
    let each = baseline_fixed_parcellation(&mut tape, yv, &ids, 12).unwrap();
    assert_eq!(tape.value(each), &y);
    let parcels: Vec<usize> = (0..12).map(|i| (i * 5) % 4).collect();
    let grouped = baseline_fixed_parcellation(&mut tape, yv, &parcels, 5).unwrap();
    for p in 0..5 {
        let members: Vec<usize> = (0..12).filter(|&i| parcels[i] == p).collect();
        for q in 0..3 {
            let want = if members.is_empty() {
                0.0
            } else {
                members.iter().map(|&i| y.get(i, q)).sum::<f64>() / members.len() as f64
            };
            assert!((tape.value(grouped).get(p, q) - want).abs() < 1e-15);
        }
    }
}

#[test]
fn spectral_kmeans_baseline_cases() {
    let mut r = rng(23);
    let n = 20;
    let coords = random_tensor(&mut r, n, 3, 1.0);
    let y = random_tensor(&mut r, n, 4, 1.0);
    let mut tape = Tape::new();
    let yv = tape.constant(y.clone());
    let (one, labels) = baseline_spectral_kmeans(&mut tape, &coords, yv, 1, 0).unwrap();
    assert!(labels.iter().all(|&l| l == 0));
    let mean = baseline_global_average(&mut tape, yv).unwrap();
    assert!(tape.value(one).max_abs_diff(tape.value(mean)) < 1e-15);
    let (all, labels) = baseline_spectral_kmeans(&mut tape, &coords, yv, n, 0).unwrap();
    let distinct: BTreeSet<usize> = labels.iter().copied().collect();
    assert_eq!(distinct.len(), n);
    for i in 0..n {
        assert_eq!(tape.value(all).row(labels[i]), y.row(i));
    }
    let res = meshpool::kmeans::kmeans(coords.data(), 3, &meshpool::kmeans::KMeansConfig::new(4, 1)).unwrap();
    assert!(res.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for (k, pooling) in ALL_MODES.into_iter().enumerate() {
        let config = ModelConfig {
            pooling,
            kernel: if k % 2 == 0 {
                KernelSpec::default()
            } else {
                KernelSpec::Gaussian { count: 6 }
            },
            alpha: 0.1 + 1.0 / 3.0,
            ..Default::default()
        };
        let inputs = prepare_inputs(&[field_mesh(90, 30 + k as u64), field_mesh(110, 40 + k as u64)], &config);
        let mut state = state_for(&inputs, &config, 7);
        let emb = embed_mesh(&field_mesh(90, 30 + k as u64), DEFAULT_EPSILON, &EigenOptions::default())
            .unwrap()
            .1
            .into_reference();
        state.reference = Some(emb);
        let path = dir.path().join(format!("m{k}.ckpt"));
        state.save(&path).unwrap();
        let loaded = ModelState::load(&path).unwrap();
        assert_eq!(loaded, state);
        for input in &inputs {
            let (a, ..) = run(&state, input);
            let (b, ..) = run(&loaded, input);
            assert_eq!(a.data(), b.data());
        }
    }
}

#[test]
fn checkpoint_load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.ckpt");
    assert!(matches!(ModelState::load(&missing), Err(Error::MissingFile(_))));
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint at all").unwrap();
    assert!(matches!(ModelState::load(&junk), Err(Error::Parse { .. })));
}

#[test]
fn input_preconditions() {
    let config = ModelConfig::default();
    let mesh = field_mesh(40, 50);
    let names: Vec<String> = meshpool::mesh::FIELD_NAMES.iter().map(|s| s.to_string()).collect();
    let (g, emb) = embed_mesh(&mesh, DEFAULT_EPSILON, &EigenOptions::default()).unwrap();
    assert!(matches!(
        MeshInput::new(&mesh, g.clone(), &emb, &names, &config),
        Err(Error::State(_))
    ));
    let emb = emb.into_reference();
    let tight = ModelConfig {
        k_neighbors: 40,
        ..Default::default()
    };
    assert!(matches!(
        MeshInput::new(&mesh, g.clone(), &emb, &names, &tight),
        Err(Error::Argument(_))
    ));
    assert!(MeshInput::new(&mesh, g, &emb, &names[..1], &config).is_err());
    let bad = ModelConfig {
        alpha: -1.0,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn permutation_invariance_holds_for_random_seeds(seed in 100u64..10_000) {
        let config = ModelConfig::default();
        let (a, b) = permuted_pair(60, seed, &config);
        let state = state_for(&[a.clone()], &config, seed);
        let (oa, ..) = run(&state, &a);
        let (ob, ..) = run(&state, &b);
        prop_assert!(oa.max_abs_diff(&ob) <= 1e-9);
    }
}
