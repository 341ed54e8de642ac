//! Compressed sparse row matrices.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from unsorted triplets; duplicate entries are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Argument(format!(
                    "triplet ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut row = 0;
        for &t in &order {
            let (r, c, v) = triplets[t];
            while row < r {
                row += 1;
                indptr[row] = indices.len();
            }
            if indices.len() > indptr[r] && *indices.last().unwrap() == c {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
            }
        }
        while row < n_rows {
            row += 1;
            indptr[row] = indices.len();
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (idx, vals) = self.row(r);
        match idx.binary_search(&c) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (idx, vals) = self.row(r);
            idx.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.n_rows) {
            let (idx, vals) = self.row(r);
            *out = idx.iter().zip(vals).fold(0.0, |acc, (&c, v)| acc + v * x[c]);
        }
    }

    /// `self · x` for a dense right-hand side.
    pub fn mul_dense(&self, x: &Tensor) -> Result<Tensor> {
        if x.rows() != self.n_cols {
            return Err(Error::Shape {
                op: "spmm",
                left: (self.n_rows, self.n_cols),
                right: x.shape(),
            });
        }
        let m = x.cols();
        let mut out = Tensor::zeros(self.n_rows, m);
        for r in 0..self.n_rows {
            let (idx, vals) = self.row(r);
            let orow = out.row_mut(r);
            for (&c, &v) in idx.iter().zip(vals) {
                for (o, xv) in orow.iter_mut().zip(x.row(c)) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · x`.
    pub fn mul_dense_t(&self, x: &Tensor) -> Result<Tensor> {
        if x.rows() != self.n_rows {
            return Err(Error::Shape {
                op: "spmm_t",
                left: (self.n_rows, self.n_cols),
                right: x.shape(),
            });
        }
        let m = x.cols();
        let mut out = Tensor::zeros(self.n_cols, m);
        for r in 0..self.n_rows {
            let (idx, vals) = self.row(r);
            let xrow = x.row(r);
            for (&c, &v) in idx.iter().zip(vals) {
                for (o, xv) in out.row_mut(c).iter_mut().zip(xrow) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            out.set(r, c, v);
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.iter().all(|(r, c, v)| self.get(c, r) == v)
    }
}
