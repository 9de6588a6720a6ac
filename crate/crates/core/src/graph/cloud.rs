use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

/// `n` samples in `R^D`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl PointCloud {
    pub fn new(data: Vec<f64>, n: usize, dim: usize) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(invalid(format!("point cloud must be non-empty, got {n}x{dim}")));
        }
        if data.len() != n * dim {
            return Err(invalid(format!("point cloud buffer has {} values, expected {n}x{dim}", data.len())));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / dim,
                column: k % dim,
            });
        }
        Ok(PointCloud { data, n, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(invalid(format!("row {i} has {} columns, expected {dim}", r.len())));
        }
        PointCloud::new(rows.concat(), rows.len(), dim)
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        PointCloud::new(data, m.nrows(), m.ncols())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Ambient dimension `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.dim, &self.data)
    }

    /// Keeps only the rows listed in `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.n {
                return Err(Error::IndexOutOfRange { index: i, len: self.n });
            }
            data.extend_from_slice(self.point(i));
        }
        PointCloud::new(data, indices.len(), self.dim)
    }

    /// Applies `f` to every coordinate.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<PointCloud> {
        PointCloud::new(self.data.iter().map(|&v| f(v)).collect(), self.n, self.dim)
    }
}

/// Squared Euclidean distance. Shared by every neighbor search backend so they
/// agree bit for bit.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
