//! Seeded Lloyd k-means with k-means++ initialization and restarts.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kdtree::dist2;

#[derive(Clone, Debug)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            max_iters: 100,
            restarts: 4,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    /// `k` centers, each of the input dimension.
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub objective: f64,
    /// Objective after every assignment step of the winning restart.
    pub trace: Vec<f64>,
}

/// Clusters the rows of a flat row-major `points` array with `dim` columns.
pub fn kmeans(points: &[f64], dim: usize, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = points.len() / dim;
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::Argument(format!("k = {} must be in [1, {n}]", cfg.k)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..cfg.restarts.max(1) {
        let init = plus_plus_init(points, dim, cfg.k, &mut rng);
        let res = lloyd(points, dim, init, cfg.max_iters);
        if best.as_ref().map_or(true, |b| res.objective < b.objective) {
            best = Some(res);
        }
    }
    Ok(best.unwrap())
}

/// Lloyd iterations from the given centers.
pub fn lloyd(points: &[f64], dim: usize, mut centers: Vec<Vec<f64>>, max_iters: usize) -> KMeansResult {
    let n = points.len() / dim;
    let k = centers.len();
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut obj = 0.0;
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let (c, d) = nearest_center(row(i), &centers);
            if c != *label {
                changed = true;
                *label = c;
            }
            obj += d;
        }
        trace.push(obj);
        if !changed && trace.len() > 1 {
            break;
        }
        // update, reseeding empty clusters with the point farthest from its center
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| {
                        dist2(row(a), &centers[labels[a]])
                            .total_cmp(&dist2(row(b), &centers[labels[b]]))
                            .then(b.cmp(&a))
                    });
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    labels[i] = c;
                    counts[c] = 1;
                    centers[c] = row(i).to_vec();
                }
            }
        }
    }
    let objective = (0..n).map(|i| dist2(row(i), &centers[labels[i]])).sum();
    KMeansResult {
        centers,
        labels,
        objective,
        trace,
    }
}

pub fn nearest_center(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = dist2(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centers = vec![row(rng.gen_range(0..n)).to_vec()];
    let mut d: Vec<f64> = (0..n).map(|i| dist2(row(i), &centers[0])).collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&d) {
            Ok(w) => w.sample(rng),
            // all remaining mass is zero: duplicates only
            Err(_) => rng.gen_range(0..n),
        };
        centers.push(row(next).to_vec());
        let c = centers.last().unwrap();
        for (i, di) in d.iter_mut().enumerate() {
            *di = di.min(dist2(row(i), c));
        }
    }
    centers
}
