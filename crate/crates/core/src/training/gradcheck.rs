use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, GradCheckReport, Tape, Var};
use crate::error::{Error, Result};
use crate::mesh::{gen_synthetic_mesh, MeshKind, SurfaceMesh, Target, TaskKind, FIELD_NAMES};
use crate::model::{fit_domains, forward, loss, MeshInput, ModelConfig, ModelState, ParamVars};
use crate::spectral::{embed_mesh, EigenOptions};

/// Finite-difference step of the full-network check.
pub const NETWORK_CHECK_STEP: f64 = 1e-6;
/// Largest accepted per-parameter relative error.
pub const NETWORK_CHECK_TOLERANCE: f64 = 1e-4;

/// Jittered bipyramid: a ring of `n - 2` vertices closed by two apices.
fn bipyramid(n: usize, rng: &mut ChaCha8Rng) -> Result<SurfaceMesh> {
    if n < 6 {
        return Err(Error::Argument(format!("gradient check meshes need n >= 6, got {n}")));
    }
    let ring = n - 2;
    let mut vertices: Vec<[f64; 3]> = (0..ring)
        .map(|k| {
            let t = std::f64::consts::TAU * (k as f64 + rng.gen_range(-0.2..0.2)) / ring as f64;
            let r = 1.0 + rng.gen_range(-0.1..0.1);
            [r * t.cos(), r * t.sin(), rng.gen_range(-0.1..0.1)]
        })
        .collect();
    vertices.push([0.05, -0.05, 1.0]);
    vertices.push([-0.05, 0.05, -1.0]);
    let (top, bottom) = (ring, ring + 1);
    let mut faces = Vec::with_capacity(2 * ring);
    for k in 0..ring {
        let next = (k + 1) % ring;
        faces.push([k, next, top]);
        faces.push([next, k, bottom]);
    }
    let m = SurfaceMesh::new(vertices, faces);
    m.validate()?;
    Ok(m)
}

/// Mesh with uniform random input fields and parcels from coordinate octants.
///
/// Blob meshes from 12 nodes up; smaller sizes use a jittered bipyramid.
pub fn random_field_mesh(n: usize, seed: u64) -> Result<SurfaceMesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77);
    let mut m = if n >= 12 {
        gen_synthetic_mesh(MeshKind::Blob, n, seed)?
    } else {
        bipyramid(n, &mut rng)?
    };
    for name in FIELD_NAMES {
        let v = (0..m.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        m.set_field(name, v);
    }
    m.parcels = Some(
        m.vertices
            .iter()
            .map(|p| (p[0] > 0.0) as usize + 2 * (p[1] > 0.0) as usize + 4 * (p[2] > 0.0) as usize)
            .collect(),
    );
    Ok(m)
}

#[derive(Clone, Debug)]
pub struct NetworkGradCheck {
    pub report: GradCheckReport,
    /// Parameter names in report order.
    pub names: Vec<String>,
    pub n_nodes: usize,
}

impl NetworkGradCheck {
    /// Largest per-parameter relative error and the parameter it belongs to.
    pub fn worst(&self) -> (&str, f64) {
        (&self.names[self.report.worst_param], self.report.max_norm_error)
    }

    pub fn passed(&self) -> bool {
        self.report.max_norm_error <= NETWORK_CHECK_TOLERANCE
    }
}

/// Transformation applied to the network output before the loss.
pub type OutputHook<'a> = &'a dyn Fn(&mut Tape, Var) -> Result<Var>;

/// Central-difference check of every parameter of a freshly initialized
/// network on a seeded `n`-node mesh, with the model's own loss.
pub fn network_grad_check(
    config: &ModelConfig,
    n: usize,
    seed: u64,
    h: f64,
    hook: Option<OutputHook>,
) -> Result<NetworkGradCheck> {
    let mesh = random_field_mesh(n, seed)?;
    let (graph, emb) = embed_mesh(
        &mesh,
        crate::mesh::DEFAULT_EPSILON,
        &EigenOptions {
            d: config.d,
            ..Default::default()
        },
    )?;
    let names: Vec<String> = FIELD_NAMES[..config.n_fields().min(FIELD_NAMES.len())]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let input = MeshInput::new(&mesh, graph, &emb.into_reference(), &names, config)?;
    let (d1, d2) = fit_domains(&[&input])?;
    let state = ModelState::init(config, [d1, d2], seed)?;
    let target = match config.task {
        TaskKind::Classify => Target::Class(config.n_outputs - 1),
        TaskKind::Regress => Target::Values(vec![0.3; config.n_outputs]),
    };
    let names = state.param_names();
    let report = grad_check(
        |tape, vars| {
            let p = ParamVars::from_vars(&names, vars);
            let mut f = forward(tape, &input, &state, &p)?;
            if let Some(hook) = hook {
                f.output = hook(tape, f.output)?;
            }
            Ok(loss(tape, &f, &target, &input, &state.config)?.total)
        },
        &state.param_tensors(),
        h,
    )?;
    Ok(NetworkGradCheck {
        report,
        names,
        n_nodes: mesh.n_vertices(),
    })
}
