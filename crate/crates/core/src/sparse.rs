//! Compressed sparse row storage for the kernel and Laplacian matrices.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from per-row `(column, value)` lists. Columns inside a
    /// row must be strictly increasing.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        let nrows = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut offsets = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        offsets.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let mut prev: Option<u32> = None;
            for (j, v) in row {
                if j as usize >= ncols || prev.is_some_and(|p| p >= j) {
                    return Err(invalid(format!("row {i}: column {j} out of order or range")));
                }
                prev = Some(j);
                indices.push(j);
                values.push(v);
            }
            offsets.push(indices.len());
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            offsets,
            indices,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(invalid(format!("triplet ({i}, {j}) outside {nrows}x{ncols}")));
            }
            rows[i].push((j as u32, v));
        }
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
            row.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
        }
        CsrMatrix::from_rows(ncols, rows)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        match idx.binary_search(&(j as u32)) {
            Ok(k) => val[k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (idx, val) = self.row(i);
            *yi = idx.iter().zip(val).map(|(&j, &v)| v * x[j as usize]).sum();
        }
    }

    /// Returns a copy with every stored value replaced by `f(row, col, value)`.
    pub fn map_values(&self, f: impl Fn(usize, usize, f64) -> f64) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.offsets[i]..self.offsets[i + 1] {
                out.values[k] = f(i, self.indices[k] as usize, self.values[k]);
            }
        }
        out
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// All stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (idx, val) = self.row(i);
            idx.iter().zip(val).map(move |(&j, &v)| (i, j as usize, v))
        })
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }
}
