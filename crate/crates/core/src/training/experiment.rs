use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::dataset::{DatasetItem, EmbedOptions, EmbeddedDataset, PreparedDataset};
use super::train::{evaluate, metric_name, train, MetricsReport};
use crate::error::{Error, Result};
use crate::mesh::{
    gen_labeled_meshes, subsample_mesh, DatasetSpec, Split, SplitRatios, SyntheticTask, TaskKind, FIELD_NAMES,
};
use crate::model::{ModelConfig, PoolingMode};

pub const EXPERIMENT_FORMAT_VERSION: u32 = 1;

/// Version string recorded in run metadata.
pub fn code_version() -> String {
    match option_env!("MESHPOOL_GIT_DESCRIBE") {
        Some(g) => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Test accuracy of each pooling mode on the two-region task.
    PoolingComparison,
    /// Accuracy when training on subsampled meshes, tested at the same size and at full size.
    SizeStudy,
    /// Parcel-fraction regression with AMI between learned clusters and parcels.
    ParcelRegression,
    Classify,
    Regress,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::PoolingComparison => "pooling_comparison",
            ExperimentKind::SizeStudy => "size_study",
            ExperimentKind::ParcelRegression => "parcel_regression",
            ExperimentKind::Classify => "classify",
            ExperimentKind::Regress => "regress",
        }
    }

    fn task(&self) -> SyntheticTask {
        match self {
            ExperimentKind::ParcelRegression | ExperimentKind::Regress => SyntheticTask::ParcelSizeReg,
            _ => SyntheticTask::TwoRegionClass,
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ExperimentKind::PoolingComparison,
            ExperimentKind::SizeStudy,
            ExperimentKind::ParcelRegression,
            ExperimentKind::Classify,
            ExperimentKind::Regress,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::Argument(format!("unknown experiment kind {s:?}")))
    }
}

/// Everything an experiment depends on.
///
/// The dataset task follows the experiment kind, generated splits use
/// `train.split_ratios`, and the model's task, output count and parcel count
/// follow the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// One training run per seed and condition.
    pub seeds: Vec<u64>,
    /// Conditions of the pooling comparison, in table order.
    pub poolings: Vec<PoolingMode>,
    /// Node budgets of the size study; full-size meshes are always added.
    pub budgets: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            seeds: (0..5).collect(),
            poolings: vec![
                PoolingMode::GlobalAverage,
                PoolingMode::FixedParcellation,
                PoolingMode::SpectralKmeans,
                PoolingMode::Learnable,
            ],
            budgets: vec![100, 1000],
        }
    }
}

/// Mean and sample standard deviation over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std, values }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub columns: Vec<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub condition: String,
    pub seed: u64,
    pub values: Vec<f64>,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    /// Names of the summarized columns.
    pub columns: Vec<String>,
    pub rows: Vec<ConditionSummary>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    pub fn row(&self, condition: &str) -> Option<&ConditionSummary> {
        self.rows.iter().find(|r| r.condition == condition)
    }

    /// `condition`, then `<column>_mean` and `<column>_std` per column, then the seed count.
    pub fn table_tsv(&self) -> String {
        let mut s = String::from("condition");
        for c in &self.columns {
            let _ = write!(s, "\t{c}_mean\t{c}_std");
        }
        s.push_str("\tseeds\n");
        for r in &self.rows {
            s.push_str(&r.condition);
            for c in &r.columns {
                let _ = write!(s, "\t{}\t{}", c.mean, c.std);
            }
            let _ = writeln!(s, "\t{}", r.columns.first().map_or(0, |c| c.values.len()));
        }
        s
    }

    pub fn runs_tsv(&self) -> String {
        let mut s = String::from("condition\tseed");
        for c in &self.columns {
            let _ = write!(s, "\t{c}");
        }
        s.push_str("\tbest_epoch\tepochs_run\n");
        for r in &self.runs {
            let _ = write!(s, "{}\t{}", r.condition, r.seed);
            for v in &r.values {
                let _ = write!(s, "\t{v}");
            }
            let last = r.report.epochs.last().map_or(0, |e| e.epoch);
            let _ = writeln!(s, "\t{}\t{last}", r.report.best_epoch);
        }
        s
    }

    /// AMI per evaluated epoch, one column per run that recorded it.
    pub fn ami_curve_tsv(&self) -> Option<String> {
        let runs: Vec<&RunRecord> = self
            .runs
            .iter()
            .filter(|r| r.report.epochs.iter().any(|e| e.ami.is_some()))
            .collect();
        let first = runs.first()?;
        let mut s = String::from("epoch");
        for r in &runs {
            let _ = write!(s, "\t{}_seed{}", r.condition, r.seed);
        }
        s.push('\n');
        for (k, e) in first.report.epochs.iter().enumerate() {
            let _ = write!(s, "{}", e.epoch);
            for r in &runs {
                match r.report.epochs.get(k).and_then(|x| x.ami) {
                    Some(a) => {
                        let _ = write!(s, "\t{a}");
                    }
                    None => s.push('\t'),
                }
            }
            s.push('\n');
        }
        Some(s)
    }
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    format_version: u32,
    code_version: String,
    kind: ExperimentKind,
    condition: &'a str,
    seed: u64,
    dataset: &'a DatasetSpec,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    metrics: Vec<(&'a str, f64)>,
    report: &'a MetricsReport,
}

/// The generated dataset of an experiment: the task follows `kind` and the
/// splits follow `train.split_ratios`.
pub fn dataset_spec(kind: ExperimentKind, config: &ExperimentConfig) -> Result<DatasetSpec> {
    let ratios = config.train.split_ratios;
    if config.dataset.ratios != SplitRatios::default() && config.dataset.ratios != ratios {
        return Err(Error::Argument(
            "dataset.ratios differs from train.split_ratios; set split ratios in the training config".into(),
        ));
    }
    Ok(DatasetSpec {
        task: kind.task(),
        ratios,
        ..config.dataset.clone()
    })
}

fn names() -> Vec<String> {
    FIELD_NAMES.iter().map(|s| s.to_string()).collect()
}

fn task_of(task: SyntheticTask, spec: &DatasetSpec) -> (TaskKind, usize) {
    match task {
        SyntheticTask::TwoRegionClass => (TaskKind::Classify, 2),
        SyntheticTask::ParcelSizeReg => (TaskKind::Regress, spec.n_parcels),
    }
}

fn model_for(base: &ModelConfig, spec: &DatasetSpec, task: SyntheticTask, pooling: PoolingMode) -> ModelConfig {
    let (kind, outputs) = task_of(task, spec);
    ModelConfig {
        task: kind,
        n_outputs: outputs,
        n_parcels: spec.n_parcels,
        pooling,
        ..base.clone()
    }
}

fn train_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        checkpoint: None,
        ..cfg.clone()
    }
}

/// Trains every condition of `kind` for every seed and summarizes test metrics.
///
/// When `out_dir` is given the report files are written there: `table.tsv`,
/// `runs.tsv`, `experiment.json`, one metadata file per run under `runs/`
/// and `ami_curve.tsv` when cluster AMI was recorded.
pub fn run_experiment(kind: ExperimentKind, config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentReport> {
    config.train.validate()?;
    if config.seeds.is_empty() {
        return Err(Error::Argument("experiment needs at least one seed".into()));
    }
    let spec = dataset_spec(kind, config)?;
    let task = spec.task;
    let (task_kind, n_outputs) = task_of(task, &spec);
    let opts = EmbedOptions {
        eigen: crate::spectral::EigenOptions {
            d: config.model.d,
            ..Default::default()
        },
        ..Default::default()
    };
    let items = DatasetItem::from_labeled(gen_labeled_meshes(&spec)?);
    let metric = metric_name(task_kind).to_string();

    let mut runs = Vec::new();
    let mut models = Vec::new();
    let columns;
    match kind {
        ExperimentKind::SizeStudy => {
            columns = vec![format!("{metric}_same_size"), format!("{metric}_full")];
            let mut budgets = config.budgets.clone();
            budgets.sort_unstable();
            budgets.dedup();
            let mut conditions: Vec<(String, Option<usize>)> =
                budgets.iter().map(|&b| (b.to_string(), Some(b))).collect();
            conditions.push(("full".into(), None));
            let model = model_for(&config.model, &spec, task, config.model.pooling);
            for (label, budget) in conditions {
                let sized: Vec<DatasetItem> = match budget {
                    None => items.clone(),
                    Some(b) => items
                        .iter()
                        .enumerate()
                        .map(|(i, it)| {
                            let n = it.mesh.n_vertices();
                            let mesh = if b >= n {
                                it.mesh.clone()
                            } else {
                                subsample_mesh(&it.mesh, b, spec.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))?
                            };
                            Ok(DatasetItem { mesh, ..it.clone() })
                        })
                        .collect::<Result<_>>()?,
                };
                let data = EmbeddedDataset::new(sized, task_kind, n_outputs, names(), None, &opts)?;
                let prepared = PreparedDataset::new(&data, &model)?;
                let full = match budget {
                    None => None,
                    Some(_) => {
                        let test_items: Vec<DatasetItem> =
                            items.iter().filter(|it| it.split == Split::Test).cloned().collect();
                        let full = EmbeddedDataset::new(
                            test_items,
                            task_kind,
                            n_outputs,
                            names(),
                            Some(data.reference.clone()),
                            &opts,
                        )?;
                        Some(PreparedDataset::new(&full, &model)?)
                    }
                };
                for &seed in &config.seeds {
                    let (state, report) = train(&prepared, &model, &train_seed(&config.train, seed))?;
                    let same = report
                        .test_metric
                        .ok_or_else(|| Error::Argument("size study needs a test split".into()))?;
                    let at_full = match &full {
                        None => same,
                        Some(f) => evaluate(&state, f, Split::Test)?.metric,
                    };
                    runs.push(RunRecord {
                        condition: label.clone(),
                        seed,
                        values: vec![same, at_full],
                        report,
                    });
                    models.push(model.clone());
                }
            }
        }
        _ => {
            columns = vec![metric];
            let data = EmbeddedDataset::new(items, task_kind, n_outputs, names(), None, &opts)?;
            let poolings = match kind {
                ExperimentKind::PoolingComparison => config.poolings.clone(),
                ExperimentKind::ParcelRegression => vec![PoolingMode::Learnable],
                _ => vec![config.model.pooling],
            };
            for pooling in poolings {
                let model = model_for(&config.model, &spec, task, pooling);
                let prepared = PreparedDataset::new(&data, &model)?;
                for &seed in &config.seeds {
                    let (_, report) = train(&prepared, &model, &train_seed(&config.train, seed))?;
                    let m = report
                        .test_metric
                        .ok_or_else(|| Error::Argument("experiment needs a test split".into()))?;
                    runs.push(RunRecord {
                        condition: pooling.name().into(),
                        seed,
                        values: vec![m],
                        report,
                    });
                    models.push(model.clone());
                }
            }
        }
    }

    let mut rows: Vec<ConditionSummary> = Vec::new();
    for r in &runs {
        if rows.iter().all(|x| x.condition != r.condition) {
            let mine: Vec<&RunRecord> = runs.iter().filter(|x| x.condition == r.condition).collect();
            rows.push(ConditionSummary {
                condition: r.condition.clone(),
                columns: (0..columns.len())
                    .map(|c| Summary::new(mine.iter().map(|x| x.values[c]).collect()))
                    .collect(),
            });
        }
    }
    let report = ExperimentReport {
        kind,
        columns,
        rows,
        runs,
    };
    if let Some(dir) = out_dir {
        write_report(dir, kind, config, &spec, &report, &models)?;
    }
    Ok(report)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_report(
    dir: &Path,
    kind: ExperimentKind,
    config: &ExperimentConfig,
    spec: &DatasetSpec,
    report: &ExperimentReport,
    models: &[ModelConfig],
) -> Result<()> {
    let run_dir = dir.join("runs");
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    write(&dir.join("table.tsv"), &report.table_tsv())?;
    write(&dir.join("runs.tsv"), &report.runs_tsv())?;
    if let Some(curve) = report.ami_curve_tsv() {
        write(&dir.join("ami_curve.tsv"), &curve)?;
    }
    let echo = serde_json::json!({
        "format_version": EXPERIMENT_FORMAT_VERSION,
        "code_version": code_version(),
        "kind": kind,
        "config": config,
    });
    write(&dir.join("experiment.json"), &serde_json::to_string_pretty(&echo)?)?;
    for (run, model) in report.runs.iter().zip(models) {
        let train = train_seed(&config.train, run.seed);
        let meta = RunMetadata {
            format_version: EXPERIMENT_FORMAT_VERSION,
            code_version: code_version(),
            kind,
            condition: &run.condition,
            seed: run.seed,
            dataset: spec,
            model,
            train: &train,
            metrics: report.columns.iter().map(String::as_str).zip(run.values.iter().copied()).collect(),
            report: &run.report,
        };
        let path = run_dir.join(format!("{}_seed{}.json", run.condition, run.seed));
        write(&path, &serde_json::to_string_pretty(&meta)?)?;
    }
    Ok(())
}
