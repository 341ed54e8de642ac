use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, PoolingMode};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{KernelDomain, KernelSpec};
use crate::spectral::SpectralEmbedding;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MPOOLCK\0";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Weight,
    Bias,
    Mu,
    LogVar,
}

/// Shape and initialization recipe of one named parameter.
#[derive(Clone, Debug)]
struct ParamSpec {
    name: String,
    rows: usize,
    cols: usize,
    /// `fan_in · K` for weights.
    fan: usize,
    role: Role,
    /// Domain index (0 or 1) for Gaussian centres.
    domain: usize,
}

fn conv_specs(out: &mut Vec<ParamSpec>, prefix: &str, m_in: usize, m_out: usize, config: &ModelConfig, domain: usize) {
    let k = config.kernel.n_kernels(config.d);
    let mut push = |suffix: &str, rows, cols, role| {
        out.push(ParamSpec {
            name: format!("{prefix}.{suffix}"),
            rows,
            cols,
            fan: m_in * k,
            role,
            domain,
        })
    };
    push("weight", k * m_in, m_out, Role::Weight);
    push("bias", 1, m_out, Role::Bias);
    if let KernelSpec::Gaussian { .. } = config.kernel {
        push("mu", k, config.d, Role::Mu);
        push("log_var", k, config.d, Role::LogVar);
    }
}

/// Names of the convolutions in a cluster path, input side first.
pub(crate) fn cluster_layer_names(block: &str, depth: usize) -> Vec<String> {
    if depth == 1 {
        vec![format!("{block}.clust")]
    } else {
        (0..depth).map(|l| format!("{block}.clust.{l}")).collect()
    }
}

fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let (f1, f2) = (config.block1.feature_channels, config.block2.feature_channels);
    let second_domain = match config.pooling {
        PoolingMode::Learnable | PoolingMode::SpectralKmeans => 1,
        PoolingMode::GlobalAverage | PoolingMode::FixedParcellation => 0,
    };
    conv_specs(&mut specs, "block1.feat", config.input_channels, f1, config, 0);
    if config.pooling == PoolingMode::Learnable {
        let names = cluster_layer_names("block1", config.cluster_depth);
        for (l, name) in names.iter().enumerate() {
            let m_in = if l == 0 { config.input_channels } else { f1 };
            let m_out = if l + 1 == names.len() { config.block1.clusters } else { f1 };
            conv_specs(&mut specs, name, m_in, m_out, config, 0);
        }
    }
    conv_specs(&mut specs, "block2.feat", f1, f2, config, second_domain);
    if config.pooling == PoolingMode::Learnable {
        let names = cluster_layer_names("block2", config.cluster_depth);
        for (l, name) in names.iter().enumerate() {
            let m_out = if l + 1 == names.len() { config.block2.clusters } else { f2 };
            let m_in = if l == 0 { f1 } else { f2 };
            conv_specs(&mut specs, name, m_in, m_out, config, 1);
        }
    }
    for (name, m_in, m_out) in [
        ("fc1", config.fc_input_width(), config.fc1_width),
        ("fc2", config.fc1_width, config.n_outputs),
    ] {
        specs.push(ParamSpec {
            name: format!("{name}.weight"),
            rows: m_in,
            cols: m_out,
            fan: m_in,
            role: Role::Weight,
            domain: 0,
        });
        specs.push(ParamSpec {
            name: format!("{name}.bias"),
            rows: 1,
            cols: m_out,
            fan: m_in,
            role: Role::Bias,
            domain: 0,
        });
    }
    specs
}

/// Network parameters plus the data-dependent buffers needed at inference.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: BTreeMap<String, Tensor>,
    /// Kernel domains of the first and second block.
    pub domains: [KernelDomain; 2],
    /// Embedding that new meshes are aligned to.
    pub reference: Option<SpectralEmbedding>,
}

/// Tape variables bound to every named parameter.
#[derive(Clone, Debug, Default)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    /// Pairs names with variables in the same order.
    pub fn from_vars(names: &[String], vars: &[Var]) -> Self {
        ParamVars {
            vars: names.iter().cloned().zip(vars.iter().copied()).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::State(format!("parameter {name} is not bound")))
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

impl ModelState {
    /// Seeded initialization: weights `U[−s, s]` with `s = (fan_in·K)^{−1/2}`,
    /// zero biases, Gaussian centres uniform over the domain.
    pub fn init(config: &ModelConfig, domains: [KernelDomain; 2], seed: u64) -> Result<Self> {
        config.validate()?;
        for dom in &domains {
            if dom.dim() != config.d {
                return Err(Error::Argument(format!(
                    "kernel domain of dimension {}, model expects {}",
                    dom.dim(),
                    config.d
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.kernel.n_kernels(config.d) as f64;
        let mut params = BTreeMap::new();
        for spec in param_specs(config) {
            let mut t = Tensor::zeros(spec.rows, spec.cols);
            let dom = &domains[spec.domain];
            match spec.role {
                Role::Weight => {
                    let s = 1.0 / (spec.fan as f64).sqrt();
                    t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-s..=s));
                }
                Role::Bias => {}
                Role::Mu => {
                    for r in 0..spec.rows {
                        for c in 0..spec.cols {
                            t.set(r, c, rng.gen_range(dom.lo[c]..=dom.hi[c]));
                        }
                    }
                }
                Role::LogVar => {
                    for r in 0..spec.rows {
                        for c in 0..spec.cols {
                            let sigma = (dom.hi[c] - dom.lo[c]) / k.powf(1.0 / config.d as f64);
                            t.set(r, c, 2.0 * sigma.ln());
                        }
                    }
                }
            }
            params.insert(spec.name, t);
        }
        Ok(ModelState {
            config: config.clone(),
            params,
            domains,
            reference: None,
        })
    }

    /// Parameter names in storage order.
    pub fn param_names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn param_tensors(&self) -> Vec<Tensor> {
        self.params.values().cloned().collect()
    }

    pub fn n_parameters(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Registers every parameter on the tape as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> ParamVars {
        ParamVars {
            vars: self.params.iter().map(|(n, t)| (n.clone(), tape.param(t.clone()))).collect(),
        }
    }

    /// Registers every parameter as a constant.
    pub fn bind_frozen(&self, tape: &mut Tape) -> ParamVars {
        ParamVars {
            vars: self.params.iter().map(|(n, t)| (n.clone(), tape.constant(t.clone()))).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors: Vec<(String, &Tensor)> = self.params.iter().map(|(n, t)| (format!("param.{n}"), t)).collect();
        let dom: Vec<Tensor> = self
            .domains
            .iter()
            .map(|d| {
                let mut v = d.lo.clone();
                v.extend_from_slice(&d.hi);
                Tensor::from_vec(2, d.dim(), v)
            })
            .collect::<Result<_>>()?;
        tensors.push(("buffer.domain1".into(), &dom[0]));
        tensors.push(("buffer.domain2".into(), &dom[1]));
        let ref_tensors = self.reference.as_ref().map(|r| {
            (
                Tensor::from_vec(1, r.eigenvalues.len(), r.eigenvalues.clone()).expect("eigenvalue row"),
                &r.coords,
                &r.transform,
            )
        });
        if let Some((ev, coords, transform)) = &ref_tensors {
            tensors.push(("buffer.reference.coords".into(), coords));
            tensors.push(("buffer.reference.eigenvalues".into(), ev));
            tensors.push(("buffer.reference.transform".into(), transform));
        }
        let header = CheckpointHeader {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            tensors: tensors
                .iter()
                .map(|(n, t)| TensorEntry {
                    name: n.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(16 + json.len() + 8 * tensors.iter().map(|(_, t)| t.len()).sum::<usize>());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, t) in &tensors {
            for x in t.data() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut buf = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::parse(path, 0, msg);
        if buf.len() < 16 || &buf[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        let body = buf.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(body)?;
        if header.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(bad(&format!("unsupported checkpoint version {}", header.format_version)));
        }
        header.config.validate()?;
        let mut offset = 16 + hlen;
        let mut tensors = BTreeMap::new();
        for e in &header.tensors {
            let len = e.rows * e.cols;
            let bytes = buf.get(offset..offset + 8 * len).ok_or_else(|| bad("truncated tensor data"))?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.insert(e.name.clone(), Tensor::from_vec(e.rows, e.cols, data)?);
            offset += 8 * len;
        }
        if offset != buf.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        let mut take = |name: &str| tensors.remove(name).ok_or_else(|| bad(&format!("missing tensor {name}")));
        let domain = |t: Tensor| KernelDomain::new(t.row(0).to_vec(), t.row(1).to_vec());
        let domains = [domain(take("buffer.domain1")?)?, domain(take("buffer.domain2")?)?];
        let reference = match take("buffer.reference.coords") {
            Ok(coords) => {
                let ev = take("buffer.reference.eigenvalues")?;
                let transform = take("buffer.reference.transform")?;
                let mut emb = SpectralEmbedding::new_unaligned(coords, ev.into_data());
                emb.aligned = true;
                emb.transform = transform;
                Some(emb)
            }
            Err(_) => None,
        };
        let mut params = BTreeMap::new();
        for (name, t) in tensors {
            match name.strip_prefix("param.") {
                Some(p) => {
                    params.insert(p.to_string(), t);
                }
                None => return Err(bad(&format!("unexpected tensor {name}"))),
            }
        }
        let expected: BTreeMap<String, (usize, usize)> = param_specs(&header.config)
            .into_iter()
            .map(|s| (s.name, (s.rows, s.cols)))
            .collect();
        let got: BTreeMap<String, (usize, usize)> = params.iter().map(|(n, t)| (n.clone(), t.shape())).collect();
        if expected != got {
            return Err(bad("parameter set does not match the stored configuration"));
        }
        Ok(ModelState {
            config: header.config,
            params,
            domains,
            reference,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    format_version: u32,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}
