//! Dataset manifest: one JSON document listing meshes, split tags and targets.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "task": "classify",
//!   "n_outputs": 2,
//!   "field_names": ["thickness", "depth"],
//!   "entries": [{"path": "mesh_0000.off", "split": "train", "target": 1}]
//! }
//! ```
//!
//! Paths are relative to the manifest's directory. Classification targets are
//! class indices, regression targets are arrays of `n_outputs` reals.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Argument(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classify,
    Regress,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Class(usize),
    Values(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub split: Split,
    pub target: Target,
}

/// Fractions of the dataset assigned to each split.
///
/// Counts are `floor(train·n)` and `floor(val·n)`; the remainder goes to test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(*r >= 0.0)) || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!("split ratios must be non-negative and sum to 1: {self:?}")));
        }
        Ok(())
    }

    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let tr = (self.train * n as f64 + 1e-9).floor() as usize;
        let va = ((self.val * n as f64 + 1e-9).floor() as usize).min(n - tr);
        (tr, va, n - tr - va)
    }

    /// Seeded assignment of `n` items to splits with the counts above.
    pub fn assign(&self, n: usize, seed: u64) -> Vec<Split> {
        let (tr, va, _) = self.counts(n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut out = vec![Split::Test; n];
        for (rank, &i) in order.iter().enumerate() {
            out[i] = if rank < tr {
                Split::Train
            } else if rank < tr + va {
                Split::Val
            } else {
                Split::Test
            };
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub task: TaskKind,
    pub n_outputs: usize,
    pub field_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.path)
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = (usize, &ManifestEntry)> {
        self.entries.iter().enumerate().filter(move |(_, e)| e.split == split)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::Argument(format!(
                "unsupported manifest version {}",
                self.format_version
            )));
        }
        for e in &self.entries {
            match (&self.task, &e.target) {
                (TaskKind::Classify, Target::Class(c)) if *c < self.n_outputs => {}
                (TaskKind::Regress, Target::Values(v)) if v.len() == self.n_outputs => {}
                _ => {
                    return Err(Error::Argument(format!(
                        "target of {} does not match task {:?} with {} outputs",
                        e.path, self.task, self.n_outputs
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    /// Reads a manifest and checks that every referenced mesh exists.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        for e in &m.entries {
            let p = m.resolve(e);
            if !p.exists() {
                return Err(Error::MissingFile(p));
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts_follow_floor_rule() {
        let r = SplitRatios::default();
        assert_eq!(r.counts(10), (7, 1, 2));
        assert_eq!(r.counts(200), (140, 20, 40));
        assert_eq!(r.counts(13), (9, 1, 3));
        let a = r.assign(13, 5);
        assert_eq!(a.iter().filter(|s| **s == Split::Train).count(), 9);
        assert_eq!(a, r.assign(13, 5));
    }

    #[test]
    fn target_json_shapes() {
        let e: ManifestEntry = serde_json::from_str(r#"{"path":"a.off","split":"val","target":1}"#).unwrap();
        assert_eq!(e.target, Target::Class(1));
        let e: ManifestEntry = serde_json::from_str(r#"{"path":"a.off","split":"test","target":[0.5,0.25]}"#).unwrap();
        assert_eq!(e.target, Target::Values(vec![0.5, 0.25]));
    }
}
