use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use meshpool::mesh::{load_mesh, DatasetManifest, Split, SplitRatios};
use meshpool::spectral::{align_with, load_embedding, AlignOptions};

fn meshpool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshpool"))
        .args(args)
        .output()
        .expect("spawn meshpool")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn gen(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "gen-synthetic",
        "--count",
        "12",
        "--n-min",
        "60",
        "--n-max",
        "90",
        "--seed",
        "3",
        "--out",
        p(out),
    ];
    args.extend_from_slice(extra);
    meshpool(&args)
}

fn dataset(dir: &Path) -> PathBuf {
    let ds = dir.join("ds");
    let o = gen(&ds, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    ds.join("manifest.json")
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&gen(&a, &[])), 0);
    assert_eq!(code(&gen(&b, &[])), 0);
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.len() > 12);
    assert_eq!(ta, tb);
}

#[test]
fn count_ten_writes_ten_meshes_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    let o = meshpool(&["gen-synthetic", "--count", "10", "--n-min", "40", "--n-max", "50", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let files: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(files.iter().filter(|f| f.ends_with(".off")).count(), 10);
    assert!(files.iter().any(|f| f == "manifest.json"));
    assert_eq!(DatasetManifest::load(&out.join("manifest.json")).unwrap().entries.len(), 10);
}

#[test]
fn generated_splits_follow_the_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = DatasetManifest::load(&dataset(dir.path())).unwrap();
    let count = |s| manifest.entries.iter().filter(|e| e.split == s).count();
    let (train, val, test) = SplitRatios::default().counts(12);
    assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (train, val, test));
}

#[test]
fn output_directory_is_not_overwritten_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    assert_eq!(code(&gen(&out, &[])), 0);
    let before = tree(&out);
    let again = gen(&out, &["--noise", "0.3"]);
    assert_eq!(code(&again), 1);
    assert!(stderr(&again).contains("--force"));
    assert_eq!(tree(&out), before);
    assert_eq!(code(&gen(&out, &["--noise", "0.3", "--force"])), 0);
    assert_ne!(tree(&out), before);
}

#[test]
fn unknown_config_key_is_a_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[train]\nepochs = 3\nlearnig_rate = 0.1\n").unwrap();
    let o = gen(&dir.path().join("ds"), &["--config", p(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("learnig_rate"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    assert_eq!(code(&meshpool(&["train"])), 1);
    assert_eq!(code(&meshpool(&["no-such-command"])), 1);
    assert_eq!(code(&meshpool(&["--help"])), 0);
}

#[test]
fn missing_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let o = meshpool(&[
        "eval",
        "--checkpoint",
        p(&dir.path().join("absent.ckpt")),
        "--manifest",
        p(&manifest),
        "--out",
        p(&dir.path().join("ev")),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

fn train(manifest: &Path, out: &Path) -> Output {
    meshpool(&[
        "train",
        "--manifest",
        p(manifest),
        "--epochs",
        "3",
        "--seed",
        "5",
        "--out",
        p(out),
    ])
}

#[test]
fn train_eval_and_embed_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let (t1, t2) = (dir.path().join("t1"), dir.path().join("t2"));
    assert_eq!(code(&train(&manifest, &t1)), 0);
    assert_eq!(code(&train(&manifest, &t2)), 0);
    for f in ["model.ckpt", "metrics.json", "epochs.tsv", "meshpool.json"] {
        assert_eq!(fs::read(t1.join(f)).unwrap(), fs::read(t2.join(f)).unwrap(), "{f}");
    }
    let eval = |out: &Path| {
        meshpool(&[
            "eval",
            "--checkpoint",
            p(&t1.join("model.ckpt")),
            "--manifest",
            p(&manifest),
            "--out",
            p(out),
        ])
    };
    let (e1, e2) = (dir.path().join("e1"), dir.path().join("e2"));
    let (o1, o2) = (eval(&e1), eval(&e2));
    assert_eq!(code(&o1), 0, "{}", stderr(&o1));
    assert_eq!(stdout(&o1), stdout(&o2));
    assert!(stdout(&o1).starts_with("accuracy_percent\t"));
    assert_eq!(tree(&e1), tree(&e2));
    let embed = |out: &Path| meshpool(&["embed", "--manifest", p(&manifest), "--out", p(out)]);
    let (m1, m2) = (dir.path().join("m1"), dir.path().join("m2"));
    assert_eq!(code(&embed(&m1)), 0);
    assert_eq!(code(&embed(&m2)), 0);
    assert_eq!(tree(&m1), tree(&m2));
}

#[test]
fn aligning_the_reference_to_itself_gives_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let emb = dir.path().join("emb");
    assert_eq!(code(&meshpool(&["embed", "--manifest", p(&manifest), "--out", p(&emb)])), 0);
    let reference = emb.join("mesh_0000.emb.tsv");
    let al = dir.path().join("al");
    let o = meshpool(&[
        "align",
        "--embeddings",
        p(&emb),
        "--reference",
        p(&reference),
        "--out",
        p(&al),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(al.join("alignment.tsv")).unwrap();
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let row: Vec<&str> = lines.find(|l| l.starts_with("mesh_0000.emb.tsv")).unwrap().split('\t').collect();
    let residual: f64 = row[1].parse().unwrap();
    assert!(residual.abs() < 1e-12);
    for r in 0..3 {
        for c in 0..3 {
            let col = header.iter().position(|h| *h == format!("r{}{}", r + 1, c + 1)).unwrap();
            let v: f64 = row[col].parse().unwrap();
            let want = if r == c { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-9, "R[{r}][{c}] = {v}");
        }
    }
    assert_eq!(table.lines().count(), 13);
}

#[test]
fn alignment_residuals_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let emb = dir.path().join("emb");
    assert_eq!(code(&meshpool(&["embed", "--manifest", p(&manifest), "--out", p(&emb)])), 0);
    let reference_path = emb.join("mesh_0002.emb.tsv");
    let al = dir.path().join("al");
    let o = meshpool(&[
        "align",
        "--embeddings",
        p(&emb),
        "--reference",
        p(&reference_path),
        "--out",
        p(&al),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let reference = load_embedding(&reference_path).unwrap().0.into_reference();
    let table = fs::read_to_string(al.join("alignment.tsv")).unwrap();
    for line in table.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let (emb_i, _) = load_embedding(&emb.join(cols[0])).unwrap();
        let (aligned, corr) = align_with(&emb_i, &reference, &AlignOptions::default()).unwrap();
        let written: f64 = cols[1].parse().unwrap();
        assert_eq!(written, corr.residual, "{}", cols[0]);
        let (saved, _) = load_embedding(&al.join(cols[0])).unwrap();
        assert!(saved.coords.max_abs_diff(&aligned.coords) < 1e-12);
    }
}

#[test]
fn overfit_tiny_run_is_near_perfect_on_its_training_split() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let o = meshpool(&[
        "gen-synthetic",
        "--count",
        "10",
        "--n-min",
        "50",
        "--n-max",
        "70",
        "--delta",
        "2",
        "--out",
        p(&ds),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // Validation split = training meshes, so best-validation selection keeps the overfit state.
    let mut m: serde_json::Value = serde_json::from_slice(&fs::read(ds.join("manifest.json")).unwrap()).unwrap();
    let entries = m["entries"].as_array().unwrap().clone();
    let mut kept: Vec<serde_json::Value> = entries.iter().filter(|e| e["split"] != "val").cloned().collect();
    for e in entries.iter().filter(|e| e["split"] == "train") {
        let mut v = e.clone();
        v["split"] = "val".into();
        kept.push(v);
    }
    m["entries"] = kept.into();
    let manifest = ds.join("overfit.json");
    fs::write(&manifest, serde_json::to_vec(&m).unwrap()).unwrap();
    let t = dir.path().join("t");
    let o = meshpool(&[
        "train",
        "--manifest",
        p(&manifest),
        "--epochs",
        "120",
        "--lr",
        "0.01",
        "--out",
        p(&t),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = meshpool(&[
        "eval",
        "--checkpoint",
        p(&t.join("model.ckpt")),
        "--manifest",
        p(&manifest),
        "--split",
        "train",
        "--out",
        p(&dir.path().join("e")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let line = stdout(&o);
    let acc: f64 = line.trim().split('\t').nth(1).unwrap().parse().unwrap();
    assert!(acc >= 99.0, "{line}");
}

#[test]
fn cluster_export_has_one_consistent_row_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let t = dir.path().join("t");
    assert_eq!(code(&train(&manifest, &t)), 0);
    let mesh_path = manifest.parent().unwrap().join("mesh_0004.off");
    let source = load_mesh(&mesh_path).unwrap();
    let run = |out: &Path| {
        meshpool(&[
            "clusters",
            "--checkpoint",
            p(&t.join("model.ckpt")),
            "--mesh",
            p(&mesh_path),
            "--out",
            p(out),
        ])
    };
    let (c1, c2) = (dir.path().join("c1"), dir.path().join("c2"));
    let o = run(&c1);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&run(&c2)), 0);
    assert_eq!(tree(&c1), tree(&c2));
    let out = load_mesh(&c1.join("clusters.off")).unwrap();
    let n = source.n_vertices();
    assert_eq!(out.n_vertices(), n);
    let labels = out.field("cluster").unwrap();
    assert_eq!(labels.len(), n);
    let probs: Vec<&[f64]> = (0..16).map(|c| out.field(&format!("s1_{c:02}")).unwrap()).collect();
    for i in 0..n {
        let row: Vec<f64> = probs.iter().map(|f| f[i]).collect();
        let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let label = labels[i] as usize;
        assert_eq!(row[label], best);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn gradcheck_passes_by_default() {
    let o = meshpool(&["gradcheck"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("max relative error"));
}

#[test]
fn gradcheck_detects_a_wrong_backward() {
    let o = meshpool(&["gradcheck", "--size", "12", "--inject-fault"]);
    assert_eq!(code(&o), 3, "{}{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("gradient check failed at "), "{}", stderr(&o));
}

#[test]
fn small_gradcheck_fits_the_time_budget() {
    let t = Instant::now();
    let o = meshpool(&["gradcheck", "--size", "10"]);
    let elapsed = t.elapsed();
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
}
