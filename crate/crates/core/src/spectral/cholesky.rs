//! Envelope Cholesky factorization of sparse symmetric positive definite
//! matrices under a reverse Cuthill–McKee ordering.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Reverse Cuthill–McKee ordering: `perm[new] = old`.
pub fn reverse_cuthill_mckee(m: &CsrMatrix) -> Vec<usize> {
    let n = m.n_rows();
    let degree: Vec<usize> = (0..n).map(|r| m.row(r).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        let root = peripheral_node(m, start, &degree);
        visited[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = m.row(u).0.iter().copied().filter(|&v| !visited[v]).collect();
            next.sort_by_key(|&v| (degree[v], v));
            for v in next {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// BFS level structures from `start`, moving to a far minimum-degree node
/// while the eccentricity grows.
fn peripheral_node(m: &CsrMatrix, start: usize, degree: &[usize]) -> usize {
    let mut root = start;
    let mut depth = 0;
    for _ in 0..8 {
        let levels = bfs_levels(m, root);
        let max = *levels.iter().filter_map(|l| l.as_ref()).max().unwrap();
        if max <= depth && depth > 0 {
            break;
        }
        depth = max;
        root = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(max))
            .map(|(i, _)| i)
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
    }
    root
}

fn bfs_levels(m: &CsrMatrix, root: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; m.n_rows()];
    level[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        let lu = level[u].unwrap();
        for &v in m.row(u).0 {
            if level[v].is_none() {
                level[v] = Some(lu + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

/// Lower-triangular factor stored row by row from the first nonzero column.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    n: usize,
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors `m + shift·I`.
    pub fn factor(m: &CsrMatrix, shift: f64) -> Result<Self> {
        let n = m.n_rows();
        let perm = reverse_cuthill_mckee(m);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (old, &i) in inv.iter().enumerate() {
            for &c in m.row(old).0 {
                let j = inv[c];
                if j < first[i] {
                    first[i] = j;
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + i - first[i] + 1);
        }
        let mut values = vec![0.0; offset[n]];
        for (old, &i) in inv.iter().enumerate() {
            let (cols, vals) = m.row(old);
            for (&c, &v) in cols.iter().zip(vals) {
                let j = inv[c];
                if j <= i {
                    values[offset[i] + j - first[i]] += v;
                }
            }
            values[offset[i] + i - first[i]] += shift;
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = values[offset[i] + j - fi];
                let ri = &values[offset[i] + lo - fi..offset[i] + j - fi];
                let rj = &values[offset[j] + lo - fj..offset[j] + j - fj];
                for (a, b) in ri.iter().zip(rj) {
                    s -= a * b;
                }
                if j < i {
                    values[offset[i] + j - fi] = s / values[offset[j + 1] - 1];
                } else {
                    if !(s > 0.0) {
                        return Err(Error::Numerical(format!("matrix is not positive definite at pivot {i}")));
                    }
                    values[offset[i] + i - fi] = s.sqrt();
                }
            }
        }
        Ok(EnvelopeCholesky {
            n,
            perm,
            first,
            offset,
            values,
        })
    }

    /// Solves `(m + shift·I) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let mut s = y[i];
            for (l, yj) in row[..i - fi].iter().zip(&y[fi..i]) {
                s -= l * yj;
            }
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (l, yj) in row[..i - fi].iter().zip(&mut y[fi..i]) {
                *yj -= l * yi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }
}
