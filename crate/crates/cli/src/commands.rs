use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use meshpool::autodiff::{CustomBackward, Tape, Tensor, Var};
use meshpool::mesh::{
    gen_labeled_dataset, load_mesh, save_mesh, DatasetManifest, Split, SplitRatios, SyntheticTask, Target,
};
use meshpool::model::{MeshInput, ModelState, PoolingMode};
use meshpool::spectral::{align_with, embed_mesh, load_embedding, save_embedding};
use meshpool::training::{
    code_version, evaluate, hard_clusters, network_grad_check, predict, run_experiment, train, EmbeddedDataset,
    ExperimentKind, PreparedDataset, NETWORK_CHECK_STEP,
};
use serde::Serialize;

use crate::{CliConfig, CliError, Command, OutArgs};

pub const OUTPUT_FORMAT_VERSION: u32 = 1;
/// Written into every output directory.
pub const ECHO_FILE: &str = "meshpool.json";
const EMBEDDING_SUFFIX: &str = "emb.tsv";

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse<T: std::str::FromStr<Err = meshpool::Error>>(s: &str) -> Result<T> {
    s.parse().map_err(|e: meshpool::Error| usage(e.to_string()))
}

/// Creates `out`, refusing a non-empty directory unless forced.
fn prepare_out(out: &OutArgs) -> Result<()> {
    if out.out.exists() {
        if !out.out.is_dir() {
            return Err(usage(format!("{} exists and is not a directory", out.out.display())));
        }
        let non_empty = fs::read_dir(&out.out)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", out.out.display())))?
            .next()
            .is_some();
        if non_empty && !out.force {
            return Err(usage(format!(
                "{} is not empty; pass --force to overwrite",
                out.out.display()
            )));
        }
    }
    fs::create_dir_all(&out.out).map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.out.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct Echo<'a, T: Serialize> {
    format_version: u32,
    code_version: String,
    command: &'a str,
    inputs: Vec<(&'a str, String)>,
    config: &'a T,
}

/// Records the effective configuration of a command in its output directory.
fn echo<T: Serialize>(dir: &Path, command: &str, inputs: Vec<(&str, String)>, config: &T) -> Result<()> {
    let e = Echo {
        format_version: OUTPUT_FORMAT_VERSION,
        code_version: code_version(),
        command,
        inputs,
        config,
    };
    let text = serde_json::to_string_pretty(&e).map_err(|e| CliError::Data(e.to_string()))?;
    write_file(&dir.join(ECHO_FILE), &(text + "\n"))
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    Ok(DatasetManifest::load(path)?)
}

fn embedding_name(entry_path: &str) -> String {
    let stem = Path::new(entry_path)
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| entry_path.to_string());
    format!("{stem}.{EMBEDDING_SUFFIX}")
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Data(e.to_string()))
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenSynthetic {
            task,
            count,
            n_min,
            n_max,
            seed,
            delta,
            noise,
            parcels,
            config,
            out,
        } => {
            let cfg = CliConfig::load(config.as_deref())?;
            let mut spec = cfg.dataset.clone();
            if spec.ratios != SplitRatios::default() && spec.ratios != cfg.train.split_ratios {
                return Err(usage(
                    "dataset.ratios differs from train.split_ratios; set split ratios in the [train] section",
                ));
            }
            spec.ratios = cfg.train.split_ratios;
            if let Some(t) = task {
                spec.task = match t.as_str() {
                    "two_region_class" => SyntheticTask::TwoRegionClass,
                    "parcel_size_reg" => SyntheticTask::ParcelSizeReg,
                    other => return Err(usage(format!("unknown task {other:?}"))),
                };
            }
            spec.count = count.unwrap_or(spec.count);
            spec.n_min = n_min.unwrap_or(spec.n_min);
            spec.n_max = n_max.unwrap_or(spec.n_max);
            spec.seed = seed.unwrap_or(spec.seed);
            spec.delta = delta.unwrap_or(spec.delta);
            spec.noise = noise.unwrap_or(spec.noise);
            spec.n_parcels = parcels.unwrap_or(spec.n_parcels);
            prepare_out(&out)?;
            let manifest = gen_labeled_dataset(&spec, &out.out)?;
            echo(&out.out, "gen-synthetic", vec![], &spec)?;
            println!("wrote {} meshes to {}", manifest.entries.len(), out.out.display());
            Ok(())
        }
        Command::Embed { manifest, d, config, out } => {
            let mut cfg = CliConfig::load(config.as_deref())?;
            cfg.embed.d = d.unwrap_or(cfg.embed.d);
            let opts = cfg.embed.options();
            let m = load_manifest(&manifest)?;
            prepare_out(&out)?;
            let mut index = String::from("mesh\tembedding\tn");
            for c in 1..=opts.eigen.d {
                let _ = write!(index, "\tlambda{c}");
            }
            index.push('\n');
            for entry in &m.entries {
                let mesh = load_mesh(&m.resolve(entry))?;
                let (_, emb) = embed_mesh(&mesh, opts.epsilon, &opts.eigen)?;
                let name = embedding_name(&entry.path);
                save_embedding(&out.out.join(&name), &emb, None)?;
                let _ = write!(index, "{}\t{name}\t{}", entry.path, emb.n());
                for l in &emb.eigenvalues {
                    let _ = write!(index, "\t{l}");
                }
                index.push('\n');
            }
            write_file(&out.out.join("embeddings.tsv"), &index)?;
            echo(
                &out.out,
                "embed",
                vec![("manifest", manifest.display().to_string())],
                &cfg.embed,
            )?;
            println!("embedded {} meshes", m.entries.len());
            Ok(())
        }
        Command::Align {
            embeddings,
            reference,
            config,
            out,
        } => {
            let cfg = CliConfig::load(config.as_deref())?;
            let (ref_emb, _) = load_embedding(&reference)?;
            let ref_name = reference
                .file_name()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_default();
            let reference_emb = if ref_emb.aligned { ref_emb } else { ref_emb.into_reference() };
            let mut files: Vec<PathBuf> = fs::read_dir(&embeddings)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", embeddings.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with(EMBEDDING_SUFFIX))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(CliError::Data(format!("no .{EMBEDDING_SUFFIX} files in {}", embeddings.display())));
            }
            prepare_out(&out)?;
            let d = reference_emb.d;
            let mut table = String::from("embedding\tresidual\titerations");
            for r in 0..d {
                for c in 0..d {
                    let _ = write!(table, "\tr{}{}", r + 1, c + 1);
                }
            }
            table.push('\n');
            for f in &files {
                let (mut emb, _) = load_embedding(f)?;
                emb.aligned = false;
                emb.transform = Tensor::identity(emb.d);
                let (aligned, corr) = align_with(&emb, &reference_emb, &cfg.embed.options().align())?;
                let name = f.file_name().unwrap().to_string_lossy().to_string();
                save_embedding(&out.out.join(&name), &aligned, Some(&ref_name))?;
                let _ = write!(table, "{name}\t{}\t{}", corr.residual, corr.trace.len() - 1);
                for v in aligned.transform.data() {
                    let _ = write!(table, "\t{v}");
                }
                table.push('\n');
            }
            write_file(&out.out.join("alignment.tsv"), &table)?;
            echo(
                &out.out,
                "align",
                vec![
                    ("embeddings", embeddings.display().to_string()),
                    ("reference", reference.display().to_string()),
                ],
                &cfg.embed,
            )?;
            println!("aligned {} embeddings", files.len());
            Ok(())
        }
        Command::Train {
            manifest,
            config,
            epochs,
            lr,
            seed,
            alpha,
            pooling,
            patience,
            eval_every,
            out,
        } => {
            let mut cfg = CliConfig::load(config.as_deref())?;
            let t = &mut cfg.train;
            t.epochs = epochs.unwrap_or(t.epochs);
            t.learning_rate = lr.unwrap_or(t.learning_rate);
            t.seed = seed.unwrap_or(t.seed);
            t.alpha = alpha.or(t.alpha);
            t.early_stop_patience = patience.or(t.early_stop_patience);
            t.eval_every = eval_every.unwrap_or(t.eval_every);
            if let Some(p) = pooling {
                cfg.model.pooling = parse::<PoolingMode>(&p)?;
            }
            t.validate().map_err(|e| usage(e.to_string()))?;
            let m = load_manifest(&manifest)?;
            cfg.model.task = m.task;
            cfg.model.n_outputs = m.n_outputs;
            cfg.model.input_channels = cfg.model.d + m.field_names.len();
            cfg.embed.d = cfg.model.d;
            cfg.model.validate().map_err(|e| usage(e.to_string()))?;
            prepare_out(&out)?;
            if cfg.train.checkpoint.is_none() {
                cfg.train.checkpoint = Some(PathBuf::from("last_good.ckpt"));
            }
            let mut train_cfg = cfg.train.clone();
            train_cfg.checkpoint = train_cfg.checkpoint.map(|p| out.out.join(p));
            echo(
                &out.out,
                "train",
                vec![("manifest", manifest.display().to_string())],
                &cfg,
            )?;
            let data = EmbeddedDataset::from_manifest(&m, None, &cfg.embed.options())?;
            let prepared = PreparedDataset::new(&data, &cfg.model)?;
            let (state, report) = train(&prepared, &cfg.model, &train_cfg)?;
            state.save(&out.out.join("model.ckpt"))?;
            write_file(&out.out.join("metrics.json"), &json(&report)?)?;
            let mut tsv = String::from("epoch\ttrain_loss\tval_loss\tami\tsaturation\tempty_clusters\tclamped\n");
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for e in &report.epochs {
                let _ = writeln!(
                    tsv,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    e.epoch,
                    e.train_loss,
                    opt(e.val_loss),
                    opt(e.ami),
                    opt(e.saturation),
                    e.empty_clusters,
                    e.clamped
                );
            }
            write_file(&out.out.join("epochs.tsv"), &tsv)?;
            match report.test_metric {
                Some(v) => println!("{}\t{v}", report.metric),
                None => println!("{}\tno test split", report.metric),
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            manifest,
            split,
            config,
            out,
        } => {
            let cfg = CliConfig::load(config.as_deref())?;
            let split: Split = parse(&split)?;
            let state = ModelState::load(&checkpoint)?;
            let reference = state
                .reference
                .clone()
                .ok_or_else(|| CliError::Data(format!("{} has no reference embedding", checkpoint.display())))?;
            let m = load_manifest(&manifest)?;
            prepare_out(&out)?;
            let mut opts = cfg.embed.options();
            opts.eigen.d = state.config.d;
            let data = EmbeddedDataset::from_manifest(&m, Some(reference), &opts)?;
            let prepared = PreparedDataset::new(&data, &state.config)?;
            let ev = evaluate(&state, &prepared, split)?;
            let mut tsv = String::from("mesh\ttarget\tpredicted\toutput\n");
            for p in &ev.predictions {
                let target = match &p.target {
                    Target::Class(c) => c.to_string(),
                    Target::Values(v) => join(v),
                };
                let predicted = match p.predicted_class {
                    Some(c) => c.to_string(),
                    None => join(&p.output),
                };
                let _ = writeln!(tsv, "{}\t{target}\t{predicted}\t{}", p.name, join(&p.output));
            }
            write_file(&out.out.join("predictions.tsv"), &tsv)?;
            write_file(&out.out.join("evaluation.json"), &json(&ev)?)?;
            echo(
                &out.out,
                "eval",
                vec![
                    ("checkpoint", checkpoint.display().to_string()),
                    ("manifest", manifest.display().to_string()),
                    ("split", format!("{split:?}").to_lowercase()),
                ],
                &cfg.embed,
            )?;
            println!("{}\t{}", ev.metric_name, ev.metric);
            Ok(())
        }
        Command::Clusters {
            checkpoint,
            mesh,
            fields,
            config,
            out,
        } => {
            let cfg = CliConfig::load(config.as_deref())?;
            let state = ModelState::load(&checkpoint)?;
            if state.config.pooling != PoolingMode::Learnable {
                return Err(usage(format!(
                    "{} uses {} pooling and has no learned clusters",
                    checkpoint.display(),
                    state.config.pooling.name()
                )));
            }
            let reference = state
                .reference
                .clone()
                .ok_or_else(|| CliError::Data(format!("{} has no reference embedding", checkpoint.display())))?;
            let surface = load_mesh(&mesh)?;
            prepare_out(&out)?;
            let mut opts = cfg.embed.options();
            opts.eigen.d = state.config.d;
            let (graph, emb) = embed_mesh(&surface, opts.epsilon, &opts.eigen)?;
            let (aligned, _) = align_with(&emb, &reference, &opts.align())?;
            let names: Vec<String> = fields.split(',').map(|s| s.trim().to_string()).collect();
            let input = MeshInput::new(&surface, graph, &aligned, &names, &state.config)?;
            let (_, s1) = predict(&state, &input)?;
            let s1 = s1.ok_or_else(|| CliError::Data("model produced no cluster assignment".into()))?;
            let labels = hard_clusters(&s1);
            let mut annotated = surface.clone();
            annotated.set_field("cluster", labels.iter().map(|&l| l as f64).collect());
            for c in 0..s1.cols() {
                annotated.set_field(&format!("s1_{c:02}"), (0..s1.rows()).map(|i| s1.get(i, c)).collect());
            }
            let target = out.out.join("clusters.off");
            save_mesh(&annotated, &target)?;
            echo(
                &out.out,
                "clusters",
                vec![
                    ("checkpoint", checkpoint.display().to_string()),
                    ("mesh", mesh.display().to_string()),
                    ("fields", fields.clone()),
                ],
                &cfg.embed,
            )?;
            println!("wrote {} node assignments to {}", labels.len(), target.display());
            Ok(())
        }
        Command::Gradcheck {
            size,
            seed,
            config,
            inject_fault,
        } => {
            let cfg = CliConfig::load(config.as_deref())?;
            let model = cfg.model.clone();
            model.validate().map_err(|e| usage(e.to_string()))?;
            let hook = |tape: &mut Tape, v: Var| -> meshpool::Result<Var> {
                let value = tape.value(v).clone();
                tape.custom(&[v], value, Box::new(DoubledBackward))
            };
            let check = network_grad_check(
                &model,
                size,
                seed,
                NETWORK_CHECK_STEP,
                if inject_fault { Some(&hook) } else { None },
            )?;
            let (name, err) = check.worst();
            println!(
                "{} nodes, {} parameters: max relative error {err:e} at {name}",
                check.n_nodes, check.report.entries_checked
            );
            if check.passed() {
                println!("pass");
                Ok(())
            } else {
                Err(CliError::Numerical(format!("gradient check failed at {name} ({err:e})")))
            }
        }
        Command::Experiment {
            kind,
            config,
            seeds,
            epochs,
            count,
            out,
        } => {
            let mut cfg = CliConfig::load(config.as_deref())?;
            let kind: ExperimentKind = parse(&kind)?;
            if let Some(n) = seeds {
                cfg.experiment.seeds = (0..n).collect();
            }
            cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
            cfg.dataset.count = count.unwrap_or(cfg.dataset.count);
            let exp = cfg.experiment();
            exp.train.validate().map_err(|e| usage(e.to_string()))?;
            prepare_out(&out)?;
            echo(&out.out, "experiment", vec![("kind", kind.name().to_string())], &exp)?;
            let report = run_experiment(kind, &exp, Some(&out.out))?;
            print!("{}", report.table_tsv());
            Ok(())
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Identity whose backward doubles the incoming gradient.
struct DoubledBackward;

impl CustomBackward for DoubledBackward {
    fn backward(&self, grad_out: &Tensor, _inputs: &[&Tensor], needs_grad: &[bool]) -> Vec<Option<Tensor>> {
        let mut g = grad_out.clone();
        g.scale_in_place(2.0);
        vec![needs_grad[0].then_some(g)]
    }
}
