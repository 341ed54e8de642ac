use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::config::TrainConfig;
use super::dataset::PreparedDataset;
use super::metrics::{accuracy, ami, argmax, mae};
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::mesh::{Split, Target, TaskKind};
use crate::model::{fit_domains, forward, loss, MeshInput, ModelConfig, ModelState, ParamVars};

/// Assignment probabilities at or above this count as saturated.
pub const SATURATION_LEVEL: f64 = 0.99;

const SHUFFLE_STREAM: u64 = 0x5eed_5eed;

/// Numbers recorded at one evaluated epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean total loss over the training steps of the epoch.
    pub train_loss: f64,
    /// Mean total loss over the validation split.
    pub val_loss: Option<f64>,
    /// Mean AMI between first-level cluster argmax and parcels.
    pub ami: Option<f64>,
    /// Fraction of nodes whose largest assignment probability is saturated.
    pub saturation: Option<f64>,
    pub empty_clusters: usize,
    pub clamped: usize,
}

/// Training history and final test metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TaskKind,
    /// `accuracy_percent` or `mae`.
    pub metric: String,
    pub n_parameters: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub test_metric: Option<f64>,
}

/// Model output for one mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub name: String,
    pub target: Target,
    pub output: Vec<f64>,
    pub predicted_class: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metric_name: String,
    pub metric: f64,
    pub predictions: Vec<Prediction>,
}

pub fn metric_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Classify => "accuracy_percent",
        TaskKind::Regress => "mae",
    }
}

/// Output row and first-level assignment of one mesh under fixed parameters.
pub fn predict(state: &ModelState, input: &MeshInput) -> Result<(Vec<f64>, Option<Tensor>)> {
    let mut tape = Tape::new();
    let p = state.bind_frozen(&mut tape);
    let f = forward(&mut tape, input, state, &p)?;
    Ok((tape.value(f.output).data().to_vec(), f.s1.map(|s| tape.value(s).clone())))
}

/// Per-node argmax of an assignment matrix.
pub fn hard_clusters(s: &Tensor) -> Vec<usize> {
    (0..s.rows()).map(|i| argmax(s.row(i))).collect()
}

/// Test-time metric on one split: accuracy in percent or MAE.
pub fn evaluate(state: &ModelState, data: &PreparedDataset, split: Split) -> Result<Evaluation> {
    let idx = data.indices(split);
    if idx.is_empty() {
        return Err(Error::Argument(format!("split {split:?} is empty")));
    }
    let mut predictions = Vec::with_capacity(idx.len());
    for &i in &idx {
        let (output, _) = predict(state, &data.inputs[i])?;
        let predicted_class = (data.task == TaskKind::Classify).then(|| argmax(&output));
        predictions.push(Prediction {
            name: data.names[i].clone(),
            target: data.targets[i].clone(),
            output,
            predicted_class,
        });
    }
    let metric = match data.task {
        TaskKind::Classify => {
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for p in &predictions {
                let Target::Class(c) = p.target else {
                    return Err(Error::Argument(format!("{}: classification needs a class target", p.name)));
                };
                pred.push(p.predicted_class.unwrap_or(usize::MAX));
                truth.push(c);
            }
            accuracy(&pred, &truth)?
        }
        TaskKind::Regress => {
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for p in &predictions {
                let Target::Values(v) = &p.target else {
                    return Err(Error::Argument(format!("{}: regression needs a value target", p.name)));
                };
                pred.push(p.output.clone());
                truth.push(v.clone());
            }
            mae(&pred, &truth)?
        }
    };
    Ok(Evaluation {
        metric_name: metric_name(data.task).into(),
        metric,
        predictions,
    })
}

struct Monitor {
    loss: f64,
    ami: Option<f64>,
    saturation: Option<f64>,
    empty: usize,
    clamped: usize,
}

fn monitor(state: &ModelState, data: &PreparedDataset, idx: &[usize]) -> Result<Monitor> {
    let mut total = 0.0;
    let mut amis = Vec::new();
    let mut saturated = 0usize;
    let mut nodes = 0usize;
    let mut have_s1 = false;
    let mut empty = 0;
    let mut clamped = 0;
    for &i in idx {
        let input = &data.inputs[i];
        let mut tape = Tape::new();
        let p = state.bind_frozen(&mut tape);
        let f = forward(&mut tape, input, state, &p)?;
        let l = loss(&mut tape, &f, &data.targets[i], input, &state.config)?;
        total += tape.value(l.total).item();
        empty += f.diagnostics.empty_clusters;
        clamped += f.diagnostics.clamped;
        if let Some(s1) = f.s1 {
            have_s1 = true;
            let s = tape.value(s1);
            for r in 0..s.rows() {
                if s.row(r).iter().cloned().fold(f64::NEG_INFINITY, f64::max) >= SATURATION_LEVEL {
                    saturated += 1;
                }
            }
            nodes += s.rows();
            if let Some(parcels) = &input.parcels {
                amis.push(ami(&hard_clusters(s), parcels)?);
            }
        }
    }
    Ok(Monitor {
        loss: total / idx.len() as f64,
        ami: (!amis.is_empty() && amis.len() == idx.len()).then(|| amis.iter().sum::<f64>() / amis.len() as f64),
        saturation: have_s1.then(|| saturated as f64 / nodes as f64),
        empty,
        clamped,
    })
}

fn sync(state: &mut ModelState, names: &[String], params: &[Tensor]) {
    for (n, t) in names.iter().zip(params) {
        state.params.insert(n.clone(), t.clone());
    }
}

fn diverged(state: &ModelState, cfg: &TrainConfig, where_: String) -> Error {
    match &cfg.checkpoint {
        Some(path) => match state.save(path) {
            Ok(()) => Error::Numerical(format!("{where_}; last finite state saved to {}", path.display())),
            Err(e) => Error::Numerical(format!("{where_}; saving the last finite state failed: {e}")),
        },
        None => Error::Numerical(where_),
    }
}

/// Adam on one mesh per step over shuffled training meshes; returns the state
/// with the lowest validation loss (training loss when there is no
/// validation split).
pub fn train(data: &PreparedDataset, model: &ModelConfig, cfg: &TrainConfig) -> Result<(ModelState, MetricsReport)> {
    cfg.validate()?;
    let mut config = model.clone();
    if let Some(a) = cfg.alpha {
        config.alpha = a;
    }
    config.validate()?;
    let train_idx = data.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::Argument("training split is empty".into()));
    }
    let val_idx = data.indices(Split::Val);
    let test_idx = data.indices(Split::Test);
    let train_inputs: Vec<&MeshInput> = train_idx.iter().map(|&i| &data.inputs[i]).collect();
    let (d1, d2) = fit_domains(&train_inputs)?;
    let mut state = ModelState::init(&config, [d1, d2], cfg.seed)?;
    state.reference = Some(data.reference.clone());

    let names = state.param_names();
    let mut params = state.param_tensors();
    let mut adam = AdamState::new(&params);
    let hyper = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut order = train_idx.clone();

    let mut records = Vec::new();
    let mut best: Option<(f64, usize, ModelState)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let input = &data.inputs[i];
            let mut tape = Tape::new();
            let vars: Vec<_> = params.iter().map(|t| tape.param(t.clone())).collect();
            let pv = ParamVars::from_vars(&names, &vars);
            let f = forward(&mut tape, input, &state, &pv)?;
            let l = loss(&mut tape, &f, &data.targets[i], input, &config)?;
            let value = tape.value(l.total).item();
            let grads = tape.backward(l.total)?;
            let grads: Vec<Tensor> = vars
                .iter()
                .zip(&params)
                .map(|(v, p)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
                .collect();
            if !value.is_finite() || grads.iter().any(|g| g.data().iter().any(|x| !x.is_finite())) {
                sync(&mut state, &names, &params);
                return Err(diverged(
                    &state,
                    cfg,
                    format!("non-finite loss or gradient at epoch {epoch} on {}", data.names[i]),
                ));
            }
            epoch_loss += value;
            adam_step(&mut params, &grads, &mut adam, &hyper)?;
        }
        let train_loss = epoch_loss / order.len() as f64;
        if epoch % cfg.eval_every != 0 && epoch != cfg.epochs {
            continue;
        }
        sync(&mut state, &names, &params);
        let (select, val_loss, mon) = if val_idx.is_empty() {
            let m = monitor(&state, data, &train_idx)?;
            (train_loss, None, m)
        } else {
            let m = monitor(&state, data, &val_idx)?;
            (m.loss, Some(m.loss), m)
        };
        if !select.is_finite() {
            return Err(diverged(&state, cfg, format!("non-finite validation loss at epoch {epoch}")));
        }
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            ami: mon.ami,
            saturation: mon.saturation,
            empty_clusters: mon.empty,
            clamped: mon.clamped,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6} select {select:.6}");
        match &best {
            Some((b, _, _)) if select >= *b => since_best += 1,
            _ => {
                best = Some((select, epoch, state.clone()));
                since_best = 0;
            }
        }
        if let Some(p) = cfg.early_stop_patience {
            if since_best >= p {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_val_loss, best_epoch, best_state) = best.expect("the last epoch is always evaluated");
    let test_metric = if test_idx.is_empty() {
        None
    } else {
        Some(evaluate(&best_state, data, Split::Test)?.metric)
    };
    let report = MetricsReport {
        task: data.task,
        metric: metric_name(data.task).into(),
        n_parameters: best_state.n_parameters(),
        epochs: records,
        best_epoch,
        best_val_loss,
        stopped_early,
        test_metric,
    };
    Ok((best_state, report))
}
