use std::collections::HashMap;

use crate::error::{Error, Result};

/// Maps arbitrary labels to `0..k` in order of first appearance.
fn dense_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

/// Contingency counts `n_ij` of two labelings, with row and column sums.
pub struct Contingency {
    pub counts: Vec<Vec<usize>>,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub n: usize,
}

impl Contingency {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Argument(format!("label vectors of length {} and {}", a.len(), b.len())));
        }
        let (a, ka) = dense_labels(a);
        let (b, kb) = dense_labels(b);
        let mut counts = vec![vec![0usize; kb]; ka];
        for (&i, &j) in a.iter().zip(&b) {
            counts[i][j] += 1;
        }
        let rows = counts.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..kb).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Contingency {
            counts,
            rows,
            cols,
            n: a.len(),
        })
    }

    /// True when the two labelings are the same partition.
    pub fn is_bijective(&self) -> bool {
        self.rows.len() == self.cols.len()
            && self.counts.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1)
            && (0..self.cols.len()).all(|j| self.counts.iter().filter(|r| r[j] > 0).count() == 1)
    }

    pub fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mut mi = 0.0;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    let c = c as f64;
                    mi += c / n * (n * c / (self.rows[i] as f64 * self.cols[j] as f64)).ln();
                }
            }
        }
        mi
    }
}

/// Shannon entropy (nats) of a partition given its cluster sizes.
pub fn entropy(sizes: &[usize]) -> f64 {
    let n: usize = sizes.iter().sum();
    let n = n as f64;
    sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for k in 1..=n {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

/// Expected mutual information of two partitions with the given cluster
/// sizes when labels are matched at random (hypergeometric model).
pub fn expected_mutual_information(rows: &[usize], cols: &[usize]) -> f64 {
    let n: usize = rows.iter().sum();
    let lf = log_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in rows {
        for &b in cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
            for k in lo..=hi {
                let kf = k as f64;
                let log_p = fixed - lf[k] - lf[a - k] - lf[b - k] - lf[n + k - a - b];
                emi += kf / nf * (nf * kf / (a as f64 * b as f64)).ln() * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with arithmetic-mean normalization.
///
/// When the normalizer vanishes (both labelings a single cluster, for
/// example) the score is 1 for identical partitions and 0 otherwise.
pub fn ami(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    let t = Contingency::new(labels_a, labels_b)?;
    if t.n == 0 {
        return Err(Error::Argument("AMI of empty labelings".into()));
    }
    if t.is_bijective() {
        return Ok(1.0);
    }
    let mi = t.mutual_information();
    let emi = expected_mutual_information(&t.rows, &t.cols);
    let mean_h = 0.5 * (entropy(&t.rows) + entropy(&t.cols));
    let denom = mean_h - emi;
    if denom.abs() <= 1e-15 * mean_h.max(1.0) {
        return Ok(0.0);
    }
    Ok((mi - emi) / denom)
}

/// Percentage of correct class predictions.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::Argument(format!(
            "accuracy of {} predictions against {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / truth.len() as f64)
}

/// Mean absolute error over every output of every mesh.
pub fn mae(predicted: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::Argument(format!(
            "MAE of {} predictions against {} targets",
            predicted.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(Error::Argument(format!("prediction of length {} for target of length {}", p.len(), t.len())));
        }
        total += p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>();
        count += t.len();
    }
    Ok(total / count as f64)
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
