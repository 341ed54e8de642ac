use super::config::{ModelConfig, PoolingMode};
use super::input::{spectral_kmeans_labels, MeshInput};
use super::state::{cluster_layer_names, ModelState, ParamVars};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{
    geometric_conv, laplacian_reg, one_hot, pool_adjacency, pool_coords, pool_features, pooled_neighborhoods,
    ConvParams, KernelDomain, KernelSpec, Neighborhoods, PseudoCoords,
};
use crate::mesh::{Target, TaskKind};

/// Counters collected during one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Pseudo-coordinates clamped to a B-spline domain, summed over layers.
    pub clamped: usize,
    /// First-level clusters with (near) zero mass.
    pub empty_clusters: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    /// `1 × n_outputs`; logits for classification.
    pub output: Var,
    /// First-level soft assignment, learnable pooling only.
    pub s1: Option<Var>,
    /// Second-level soft assignment, learnable pooling only.
    pub s2: Option<Var>,
    pub diagnostics: Diagnostics,
}

struct Ctx<'a> {
    params: &'a ParamVars,
    kernel: KernelSpec,
    slope: f64,
    diag: Diagnostics,
}

impl Ctx<'_> {
    fn conv(
        &mut self,
        tape: &mut Tape,
        name: &str,
        y: Var,
        nbrs: &Neighborhoods,
        coords: &PseudoCoords,
        domain: &KernelDomain,
    ) -> Result<Var> {
        let params = ConvParams {
            weight: self.params.get(&format!("{name}.weight"))?,
            bias: self.params.get(&format!("{name}.bias"))?,
            mu: self.params.try_get(&format!("{name}.mu")),
            log_var: self.params.try_get(&format!("{name}.log_var")),
        };
        let out = geometric_conv(tape, y, nbrs, coords, &params, &self.kernel, domain)?;
        self.diag.clamped += out.clamped;
        Ok(out.out)
    }

    fn conv_act(
        &mut self,
        tape: &mut Tape,
        name: &str,
        y: Var,
        nbrs: &Neighborhoods,
        coords: &PseudoCoords,
        domain: &KernelDomain,
    ) -> Result<Var> {
        let z = self.conv(tape, name, y, nbrs, coords, domain)?;
        tape.leaky_relu(z, self.slope)
    }

    /// Convolution stack ending in a node-wise softmax.
    fn cluster_path(
        &mut self,
        tape: &mut Tape,
        block: &str,
        depth: usize,
        y: Var,
        nbrs: &Neighborhoods,
        coords: &PseudoCoords,
        domain: &KernelDomain,
    ) -> Result<Var> {
        let names = cluster_layer_names(block, depth);
        let mut h = y;
        for (l, name) in names.iter().enumerate() {
            if l + 1 == names.len() {
                let z = self.conv(tape, name, h, nbrs, coords, domain)?;
                return tape.row_softmax(z);
            }
            h = self.conv_act(tape, name, h, nbrs, coords, domain)?;
        }
        unreachable!("cluster path has at least one layer")
    }

    fn dense(&mut self, tape: &mut Tape, name: &str, x: Var) -> Result<Var> {
        let w = self.params.get(&format!("{name}.weight"))?;
        let b = self.params.get(&format!("{name}.bias"))?;
        let z = tape.matmul(x, w)?;
        tape.add(z, b)
    }
}

/// Column means of `y`, `1 × M`.
pub fn baseline_global_average(tape: &mut Tape, y: Var) -> Result<Var> {
    tape.segment_mean(y, &vec![0; y.rows()], 1)
}

/// Per-parcel means of `y`, `P × M`; parcels without nodes give zero rows.
pub fn baseline_fixed_parcellation(tape: &mut Tape, y: Var, parcels: &[usize], n_parcels: usize) -> Result<Var> {
    tape.segment_mean(y, parcels, n_parcels)
}

/// Hard k-means clusters of the embedding rows and the per-cluster means of `y`.
pub fn baseline_spectral_kmeans(
    tape: &mut Tape,
    coords: &Tensor,
    y: Var,
    c: usize,
    seed: u64,
) -> Result<(Var, Vec<usize>)> {
    let labels = spectral_kmeans_labels(coords, c, seed)?;
    let pooled = tape.segment_mean(y, &labels, c)?;
    Ok((pooled, labels))
}

/// Runs the network on one mesh.
pub fn forward(tape: &mut Tape, input: &MeshInput, state: &ModelState, params: &ParamVars) -> Result<ForwardOutput> {
    let config = &state.config;
    if input.features.cols() != config.input_channels {
        return Err(Error::Shape {
            op: "forward input",
            left: input.features.shape(),
            right: (input.n(), config.input_channels),
        });
    }
    let mut ctx = Ctx {
        params,
        kernel: config.kernel,
        slope: config.leaky_slope,
        diag: Diagnostics::default(),
    };
    let [dom1, dom2] = &state.domains;
    let x = tape.constant(input.features.clone());
    let edge_coords = input.block1_coords(&config.kernel, dom1)?;
    let nbrs = &input.neighborhoods;
    let h1 = ctx.conv_act(tape, "block1.feat", x, nbrs, &edge_coords, dom1)?;
    let (pooled, s1, s2) = match config.pooling {
        PoolingMode::Learnable => {
            let s1 = ctx.cluster_path(tape, "block1", config.cluster_depth, x, nbrs, &edge_coords, dom1)?;
            let y1 = pool_features(tape, s1, h1)?;
            let a1 = pool_adjacency(tape, s1, input.graph.adjacency())?;
            let u = tape.constant(input.coords.clone());
            let pc = pool_coords(tape, s1, u)?;
            ctx.diag.empty_clusters = pc.empty;
            let nb2 = pooled_neighborhoods(tape.value(a1), tape.value(pc.mass).data());
            let c2 = PseudoCoords::shared(pc.coords);
            let h2 = ctx.conv_act(tape, "block2.feat", y1, &nb2, &c2, dom2)?;
            let s2 = ctx.cluster_path(tape, "block2", config.cluster_depth, y1, &nb2, &c2, dom2)?;
            let y2 = pool_features(tape, s2, h2)?;
            (y2, Some(s1), Some(s2))
        }
        PoolingMode::GlobalAverage => {
            let h2 = ctx.conv_act(tape, "block2.feat", h1, nbrs, &edge_coords, dom1)?;
            (baseline_global_average(tape, h2)?, None, None)
        }
        PoolingMode::FixedParcellation => {
            let parcels = input
                .parcels
                .as_ref()
                .ok_or_else(|| Error::Argument("fixed-parcellation pooling needs parcels".into()))?;
            let h2 = ctx.conv_act(tape, "block2.feat", h1, nbrs, &edge_coords, dom1)?;
            (baseline_fixed_parcellation(tape, h2, parcels, config.n_parcels)?, None, None)
        }
        PoolingMode::SpectralKmeans => {
            let labels = match &input.kmeans_labels {
                Some(l) => l.clone(),
                None => spectral_kmeans_labels(&input.coords, config.block1.clusters, config.kmeans_seed)?,
            };
            let c1 = config.block1.clusters;
            let y1 = tape.segment_mean(h1, &labels, c1)?;
            let s = one_hot(&labels, c1)?;
            let mass = s.matmul_tn(&Tensor::filled(s.rows(), 1, 1.0))?;
            let a1 = input.graph.adjacency().mul_dense(&s)?;
            let a_pool = s.matmul_tn(&a1)?;
            ctx.diag.empty_clusters = mass.data().iter().filter(|&&m| m == 0.0).count();
            let mut centers = s.matmul_tn(&input.coords)?;
            for c in 0..c1 {
                let m = mass.get(c, 0);
                if m > 0.0 {
                    centers.row_mut(c).iter_mut().for_each(|x| *x /= m);
                }
            }
            let nb2 = pooled_neighborhoods(&a_pool, mass.data());
            let cvar = tape.constant(centers.clone());
            let h2 = ctx.conv_act(tape, "block2.feat", y1, &nb2, &PseudoCoords::shared(cvar), dom2)?;
            let c2 = config.block2.clusters;
            let pooled = if c2 == 1 {
                baseline_global_average(tape, h2)?
            } else {
                let (p, _) = baseline_spectral_kmeans(tape, &centers, h2, c2, config.kmeans_seed)?;
                p
            };
            (pooled, None, None)
        }
    };
    let width = config.fc_input_width();
    let flat = tape.reshape(pooled, 1, width)?;
    let f1 = ctx.dense(tape, "fc1", flat)?;
    let f1 = tape.leaky_relu(f1, config.leaky_slope)?;
    let output = ctx.dense(tape, "fc2", f1)?;
    Ok(ForwardOutput {
        output,
        s1,
        s2,
        diagnostics: ctx.diag,
    })
}

/// Loss terms of one mesh.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    /// Cross-entropy or mean squared error.
    pub prediction: Var,
    /// Unweighted Laplacian regularizer of the first assignment.
    pub regularizer: Option<Var>,
}

/// Prediction loss plus `α` times the Laplacian regularizer of `S1`.
pub fn loss(
    tape: &mut Tape,
    fwd: &ForwardOutput,
    target: &Target,
    input: &MeshInput,
    config: &ModelConfig,
) -> Result<LossTerms> {
    let prediction = match (config.task, target) {
        (TaskKind::Classify, Target::Class(c)) => tape.softmax_cross_entropy(fwd.output, *c)?,
        (TaskKind::Regress, Target::Values(v)) => {
            if v.len() != config.n_outputs {
                return Err(Error::Argument(format!(
                    "regression target has {} values, model predicts {}",
                    v.len(),
                    config.n_outputs
                )));
            }
            let t = tape.constant(Tensor::from_vec(1, v.len(), v.clone())?);
            let diff = tape.sub(fwd.output, t)?;
            let sq = tape.square(diff)?;
            let s = tape.reduce_sum(sq)?;
            tape.scale(s, 1.0 / v.len() as f64)?
        }
        _ => return Err(Error::Argument(format!("target {target:?} does not fit a {:?} model", config.task))),
    };
    let regularizer = match fwd.s1 {
        Some(s1) => Some(laplacian_reg(tape, s1, &input.graph)?),
        None => None,
    };
    let total = match regularizer {
        Some(r) if config.alpha != 0.0 => {
            let w = tape.scale(r, config.alpha)?;
            tape.add(prediction, w)?
        }
        _ => prediction,
    };
    Ok(LossTerms {
        total,
        prediction,
        regularizer,
    })
}
