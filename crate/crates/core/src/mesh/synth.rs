//! Synthetic closed surfaces and labeled datasets.
//!
//! Meshes start from a geodesic subdivision of the icosahedron. `Sphere`
//! projects it to the unit sphere. `Blob` warps the vertex density, prunes
//! vertices by collapsing edges until exactly `n` remain, and maps the result
//! onto a fixed asymmetric template shape with per-mesh variation. Every
//! vertex keeps the unit direction it came from, so regions and parcels
//! defined on directions correspond across meshes.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestEntry, Split, SplitRatios, Target, TaskKind, MANIFEST_VERSION};
use super::{save_mesh, SurfaceMesh};
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, nearest_center, KMeansConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshKind {
    Sphere,
    Blob,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticTask {
    /// Two-class task whose signal is a contrast between two fixed regions.
    TwoRegionClass,
    /// Regression of per-parcel vertex fractions.
    ParcelSizeReg,
}

/// Parameters of a synthetic labeled dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub task: SyntheticTask,
    pub count: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub seed: u64,
    /// Region contrast for `two_region_class`.
    pub delta: f64,
    /// Standard deviation of additive field noise.
    pub noise: f64,
    pub n_parcels: usize,
    pub ratios: SplitRatios,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            task: SyntheticTask::TwoRegionClass,
            count: 200,
            n_min: 500,
            n_max: 1000,
            seed: 0,
            delta: 1.0,
            noise: 0.2,
            n_parcels: 8,
            ratios: SplitRatios::default(),
        }
    }
}

pub const FIELD_NAMES: [&str; 2] = ["thickness", "depth"];
/// Per-vertex region tag written alongside the inputs: 0 outside, 1 and 2 inside.
pub const REGION_FIELD: &str = "region";

const REGION_CENTERS: [[f64; 3]; 2] = [[0.8, 0.5, 0.3], [-0.7, 0.2, -0.6]];
const REGION_RADIUS: f64 = 0.6;
const TEMPLATE_AXES: [f64; 3] = [2.0, 1.3, 0.8];
const BUMP_DIR: [f64; 3] = [0.6, 0.6, 0.53];

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Geodesic icosahedron of frequency `f`: `10f² + 2` vertices, `20f²` faces.
fn geodesic_sphere(f: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let ico = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let ico_faces = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut ids: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for face in ico_faces {
        let mut local = HashMap::new();
        for i in 0..=f {
            for j in 0..=(f - i) {
                let w = [f - i - j, i, j];
                let mut key: Vec<(usize, usize)> = (0..3).filter(|&c| w[c] > 0).map(|c| (face[c], w[c])).collect();
                key.sort();
                let id = *ids.entry(key).or_insert_with(|| {
                    let mut p = [0.0; 3];
                    for c in 0..3 {
                        for (d, pd) in p.iter_mut().enumerate() {
                            *pd += ico[face[c]][d] * w[c] as f64 / f as f64;
                        }
                    }
                    verts.push(normalize(p));
                    verts.len() - 1
                });
                local.insert((i, j), id);
            }
        }
        for i in 0..f {
            for j in 0..(f - i) {
                faces.push([local[&(i, j)], local[&(i + 1, j)], local[&(i, j + 1)]]);
                if i + j + 2 <= f {
                    faces.push([local[&(i + 1, j)], local[&(i + 1, j + 1)], local[&(i, j + 1)]]);
                }
            }
        }
    }
    (verts, faces)
}

fn frequency_for(n: usize) -> usize {
    let mut f = 1;
    while 10 * f * f + 2 < n {
        f += 1;
    }
    f
}

/// Removes vertices by collapsing each onto a neighbour until `target` remain.
/// Collapses that would break the manifold (link condition) or create a
/// vertex of valence below 4 are skipped.
fn prune(verts: &mut Vec<[f64; 3]>, faces: &mut Vec<[usize; 3]>, target: usize, rng: &mut ChaCha8Rng) {
    let n = verts.len();
    if target >= n {
        return;
    }
    let mut nbr: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut vfaces: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            nbr[f[k]].insert(f[(k + 1) % 3]);
            nbr[f[k]].insert(f[(k + 2) % 3]);
            vfaces[f[k]].insert(fi);
        }
    }
    let mut alive_face = vec![true; faces.len()];
    let mut alive = vec![true; n];
    let mut remaining = n;
    let mut order: Vec<usize> = (0..n).collect();
    let mut stalled = 0;
    while remaining > target {
        order.shuffle(rng);
        let before = remaining;
        for &v in &order {
            if remaining == target {
                break;
            }
            if !alive[v] || nbr[v].len() < 4 {
                continue;
            }
            // nearest neighbour first keeps the surface from folding
            let mut cands: Vec<usize> = nbr[v].iter().copied().collect();
            cands.sort_by(|&a, &b| {
                super::graph::distance(&verts[v], &verts[a])
                    .total_cmp(&super::graph::distance(&verts[v], &verts[b]))
                    .then(a.cmp(&b))
            });
            for w in cands {
                let common: Vec<usize> = nbr[v].intersection(&nbr[w]).copied().collect();
                if common.len() != 2 || nbr[w].len() + nbr[v].len() - 4 < 4 {
                    continue;
                }
                if common.iter().any(|&c| nbr[c].len() <= 4) {
                    continue;
                }
                // collapse v into w
                let vf: Vec<usize> = vfaces[v].iter().copied().collect();
                for fi in vf {
                    let f = faces[fi];
                    if f.contains(&w) {
                        alive_face[fi] = false;
                        for &u in &f {
                            vfaces[u].remove(&fi);
                        }
                    } else {
                        let mut nf = f;
                        for x in nf.iter_mut() {
                            if *x == v {
                                *x = w;
                            }
                        }
                        faces[fi] = nf;
                        vfaces[w].insert(fi);
                    }
                }
                vfaces[v].clear();
                let vn: Vec<usize> = nbr[v].iter().copied().collect();
                for u in vn {
                    nbr[u].remove(&v);
                    if u != w {
                        nbr[u].insert(w);
                        nbr[w].insert(u);
                    }
                }
                nbr[v].clear();
                alive[v] = false;
                remaining -= 1;
                break;
            }
        }
        if remaining == before {
            stalled += 1;
            if stalled > 3 {
                break;
            }
        }
    }
    let mut remap = vec![usize::MAX; n];
    let mut new_verts = Vec::with_capacity(remaining);
    for i in 0..n {
        if alive[i] {
            remap[i] = new_verts.len();
            new_verts.push(verts[i]);
        }
    }
    let new_faces = faces
        .iter()
        .zip(&alive_face)
        .filter(|(_, &a)| a)
        .map(|(f, _)| [remap[f[0]], remap[f[1]], remap[f[2]]])
        .collect();
    *verts = new_verts;
    *faces = new_faces;
}

/// Mesh plus the unit direction each vertex was generated from.
pub(crate) struct GeneratedMesh {
    pub mesh: SurfaceMesh,
    pub directions: Vec<[f64; 3]>,
}

pub(crate) fn generate(kind: MeshKind, n: usize, seed: u64) -> Result<GeneratedMesh> {
    if n < 12 {
        return Err(Error::Argument(format!("synthetic meshes need n >= 12, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut verts, mut faces) = geodesic_sphere(frequency_for(n));
    if kind == MeshKind::Sphere {
        return Ok(GeneratedMesh {
            directions: verts.clone(),
            mesh: SurfaceMesh::new(verts, faces),
        });
    }
    // density warp toward a random direction
    let pole = normalize([
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ]);
    let beta = rng.gen_range(0.0..0.3);
    for v in verts.iter_mut() {
        *v = normalize([v[0] + beta * pole[0], v[1] + beta * pole[1], v[2] + beta * pole[2]]);
    }
    prune(&mut verts, &mut faces, n, &mut rng);
    let directions = verts.clone();

    let axes: Vec<f64> = TEMPLATE_AXES.iter().map(|a| a * rng.gen_range(0.95..1.05)).collect();
    let bump = normalize(BUMP_DIR);
    let mean_edge = (4.0 * std::f64::consts::PI / n as f64).sqrt();
    let positions = directions
        .iter()
        .map(|d| {
            let cosb = dot3(d, &bump);
            let r = (1.0 + 0.25 * d[0]) * (1.0 + 0.35 * (-(1.0 - cosb) / 0.15).exp());
            let mut p = [0.0; 3];
            for k in 0..3 {
                let jitter: f64 = rng.sample::<f64, _>(StandardNormal) * 0.05 * mean_edge;
                p[k] = axes[k] * r * d[k] + jitter;
            }
            p
        })
        .collect();
    let mesh = SurfaceMesh::new(positions, faces);
    mesh.validate()?;
    Ok(GeneratedMesh { mesh, directions })
}

/// Closed triangulated surface with about `n` vertices, deterministic per seed.
///
/// `Sphere` returns the smallest geodesic icosphere with at least `n`
/// vertices; `Blob` has exactly `n` vertices.
pub fn gen_synthetic_mesh(kind: MeshKind, n: usize, seed: u64) -> Result<SurfaceMesh> {
    Ok(generate(kind, n, seed)?.mesh)
}

/// Centers of the fixed parcellation, from k-means over template directions.
pub(crate) fn parcel_centers(p: usize) -> Result<Vec<Vec<f64>>> {
    let (verts, _) = geodesic_sphere(8);
    let flat: Vec<f64> = verts.iter().flatten().copied().collect();
    let res = kmeans(&flat, 3, &KMeansConfig::new(p, 0x5eed))?;
    Ok(res.centers)
}

/// A generated mesh with its target and split.
pub struct LabeledMesh {
    pub mesh: SurfaceMesh,
    pub target: Target,
    pub split: Split,
}

/// In-memory dataset following `spec`.
pub fn gen_labeled_meshes(spec: &DatasetSpec) -> Result<Vec<LabeledMesh>> {
    if spec.count < 10 {
        return Err(Error::Argument(format!("dataset needs at least 10 meshes, got {}", spec.count)));
    }
    if spec.n_min < 12 || spec.n_min > spec.n_max {
        return Err(Error::Argument(format!("invalid node range [{}, {}]", spec.n_min, spec.n_max)));
    }
    spec.ratios.validate()?;
    let centers = parcel_centers(spec.n_parcels)?;
    let splits = spec.ratios.assign(spec.count, spec.seed ^ 0x9e37_79b9);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let plan: Vec<(usize, u64)> = (0..spec.count)
        .map(|_| (rng.gen_range(spec.n_min..=spec.n_max), rng.gen()))
        .collect();
    plan.iter()
        .enumerate()
        .map(|(idx, &(n, mesh_seed))| {
            let g = generate(MeshKind::Blob, n, mesh_seed)?;
            let mut frng = ChaCha8Rng::seed_from_u64(mesh_seed ^ 0xf1e1d);
            let (mesh, target) = label_mesh(g, spec, idx, &centers, &mut frng);
            Ok(LabeledMesh {
                mesh,
                target,
                split: splits[idx],
            })
        })
        .collect()
}

fn label_mesh(
    g: GeneratedMesh,
    spec: &DatasetSpec,
    idx: usize,
    centers: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> (SurfaceMesh, Target) {
    let GeneratedMesh { mut mesh, directions } = g;
    let n = mesh.n_vertices();
    let parcels: Vec<usize> = directions.iter().map(|d| nearest_center(d, centers).0).collect();
    let mut noise = |scale: f64| -> f64 { rng.sample::<f64, _>(StandardNormal) * scale };
    let target = match spec.task {
        SyntheticTask::TwoRegionClass => {
            let c = [normalize(REGION_CENTERS[0]), normalize(REGION_CENTERS[1])];
            let cos_r = REGION_RADIUS.cos();
            let region: Vec<usize> = directions
                .iter()
                .map(|d| {
                    if dot3(d, &c[0]) >= cos_r {
                        1
                    } else if dot3(d, &c[1]) >= cos_r {
                        2
                    } else {
                        0
                    }
                })
                .collect();
            let n1 = region.iter().filter(|&&r| r == 1).count() as f64;
            let n2 = region.iter().filter(|&&r| r == 2).count() as f64;
            // a·|R1| = b·|R2| keeps the global mean class-independent
            let a = spec.delta * n2 / (n1 + n2);
            let b = spec.delta * n1 / (n1 + n2);
            let class = idx % 2;
            let sign = if class == 0 { 1.0 } else { -1.0 };
            let thickness = region
                .iter()
                .map(|&r| {
                    let s = match r {
                        1 => sign * a,
                        2 => -sign * b,
                        _ => 0.0,
                    };
                    s + noise(spec.noise)
                })
                .collect();
            let depth = directions.iter().map(|d| 0.5 * d[2] + noise(spec.noise)).collect();
            mesh.set_field(FIELD_NAMES[0], thickness);
            mesh.set_field(FIELD_NAMES[1], depth);
            mesh.set_field(REGION_FIELD, region.iter().map(|&r| r as f64).collect());
            mesh.meta.insert("class".into(), class.to_string());
            Target::Class(class)
        }
        SyntheticTask::ParcelSizeReg => {
            let thickness = directions.iter().map(|d| 0.3 * d[0] * d[1] + noise(spec.noise)).collect();
            let depth = directions.iter().map(|d| 0.5 * d[2] + noise(spec.noise)).collect();
            mesh.set_field(FIELD_NAMES[0], thickness);
            mesh.set_field(FIELD_NAMES[1], depth);
            let mut counts = vec![0usize; spec.n_parcels];
            for &p in &parcels {
                counts[p] += 1;
            }
            Target::Values(counts.iter().map(|&c| c as f64 / n as f64).collect())
        }
    };
    mesh.parcels = Some(parcels);
    (mesh, target)
}

/// Writes a synthetic dataset (meshes plus `manifest.json`) into `out_dir`.
pub fn gen_labeled_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let meshes = gen_labeled_meshes(spec)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(meshes.len());
    for (i, lm) in meshes.iter().enumerate() {
        let name = format!("mesh_{i:04}.off");
        save_mesh(&lm.mesh, &out_dir.join(&name))?;
        entries.push(ManifestEntry {
            path: name,
            split: lm.split,
            target: lm.target.clone(),
        });
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        task: match spec.task {
            SyntheticTask::TwoRegionClass => TaskKind::Classify,
            SyntheticTask::ParcelSizeReg => TaskKind::Regress,
        },
        n_outputs: match spec.task {
            SyntheticTask::TwoRegionClass => 2,
            SyntheticTask::ParcelSizeReg => spec.n_parcels,
        },
        field_names: FIELD_NAMES.iter().map(|s| s.to_string()).collect(),
        entries,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
