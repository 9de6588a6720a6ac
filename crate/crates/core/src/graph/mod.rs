//! Neighborhood graph, kernel matrix and renormalized graph Laplacian.

mod cloud;
mod kdtree;
mod laplacian;

pub(crate) use cloud::sq_dist;
pub use cloud::PointCloud;
pub use laplacian::{Laplacian, LaplacianVariant};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{try_map_range, Parallelism};
use crate::sparse::CsrMatrix;

/// Above this many points, `NeighborSearch::Auto` switches to a kd-tree.
pub const BRUTE_FORCE_LIMIT: usize = 10_000;

/// Exponent on the distance inside the kernel: `exp(-d^p / eps^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KernelExponent {
    One,
    #[default]
    Two,
}

impl KernelExponent {
    pub fn from_power(p: u32) -> Result<Self> {
        match p {
            1 => Ok(KernelExponent::One),
            2 => Ok(KernelExponent::Two),
            _ => Err(invalid(format!("kernel exponent must be 1 or 2, got {p}"))),
        }
    }

    pub fn power(self) -> u32 {
        match self {
            KernelExponent::One => 1,
            KernelExponent::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborSearch {
    #[default]
    Auto,
    BruteForce,
    KdTree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphParams {
    /// Kernel bandwidth `eps`.
    pub bandwidth: f64,
    /// Neighborhood radius; defaults to `3 * bandwidth`.
    pub radius: Option<f64>,
    pub exponent: KernelExponent,
    pub search: NeighborSearch,
}

impl GraphParams {
    pub fn new(bandwidth: f64) -> Self {
        GraphParams {
            bandwidth,
            radius: None,
            exponent: KernelExponent::Two,
            search: NeighborSearch::Auto,
        }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = Some(radius);
        self
    }

    pub fn radius(&self) -> f64 {
        self.radius.unwrap_or(3.0 * self.bandwidth)
    }

    fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(invalid(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        let r = self.radius();
        if !(r.is_finite() && r > 0.0) {
            return Err(invalid(format!("radius must be positive, got {r}")));
        }
        Ok(())
    }
}

/// Radius neighborhoods together with the kernel matrix restricted to them.
///
/// `neighbors(i)` excludes `i`; the kernel row of `i` holds the self entry
/// `K_ii = 1` followed by the neighbors, all sorted by index.
#[derive(Debug, Clone)]
pub struct NeighborGraph {
    kernel: CsrMatrix,
    bandwidth: f64,
    radius: f64,
    exponent: KernelExponent,
}

impl NeighborGraph {
    pub fn build(cloud: &PointCloud, params: &GraphParams, mode: Parallelism) -> Result<Self> {
        params.validate()?;
        let radius = params.radius();
        let r2 = radius * radius;
        let n = cloud.len();
        let use_tree = match params.search {
            NeighborSearch::Auto => n > BRUTE_FORCE_LIMIT,
            NeighborSearch::BruteForce => false,
            NeighborSearch::KdTree => true,
        };
        let tree = use_tree.then(|| kdtree::KdTree::build(cloud));
        let eps2 = params.bandwidth * params.bandwidth;
        let exponent = params.exponent;

        let rows = try_map_range(n, mode, |i| {
            let q = cloud.point(i);
            let mut idx = Vec::new();
            match &tree {
                Some(t) => t.within(q, r2, &mut idx),
                None => idx.extend((0..n).filter(|&j| sq_dist(q, cloud.point(j)) <= r2)),
            }
            idx.sort_unstable();
            if idx.len() <= 1 {
                return Err(Error::IsolatedPoint { index: i, radius });
            }
            Ok(idx
                .into_iter()
                .map(|j| {
                    let v = if j == i {
                        1.0
                    } else {
                        kernel_value(sq_dist(q, cloud.point(j)), eps2, exponent)
                    };
                    (j as u32, v)
                })
                .collect::<Vec<_>>())
        })?;
        let kernel = CsrMatrix::from_rows(n, rows)?;
        Ok(NeighborGraph {
            kernel,
            bandwidth: params.bandwidth,
            radius,
            exponent,
        })
    }

    /// Rebuilds a graph from a stored kernel matrix, checking the structural
    /// invariants: square, symmetric, unit diagonal, entries in `(0, 1]` and
    /// no isolated points.
    pub fn from_kernel(kernel: CsrMatrix, bandwidth: f64, radius: f64, exponent: KernelExponent) -> Result<Self> {
        GraphParams {
            bandwidth,
            radius: Some(radius),
            exponent,
            search: NeighborSearch::Auto,
        }
        .validate()?;
        let n = kernel.nrows();
        if kernel.ncols() != n {
            return Err(invalid(format!("kernel must be square, got {n} x {}", kernel.ncols())));
        }
        for i in 0..n {
            let (idx, val) = kernel.row(i);
            if idx.len() <= 1 {
                return Err(Error::IsolatedPoint { index: i, radius });
            }
            for (&j, &v) in idx.iter().zip(val) {
                let j = j as usize;
                if j == i && v != 1.0 {
                    return Err(invalid(format!("kernel diagonal at {i} is {v}, expected 1")));
                }
                if !(v > 0.0 && v <= 1.0) {
                    return Err(invalid(format!("kernel entry ({i}, {j}) = {v} is outside (0, 1]")));
                }
                if kernel.get(j, i) != v {
                    return Err(invalid(format!("kernel is not symmetric at ({i}, {j})")));
                }
            }
            if kernel.get(i, i) != 1.0 {
                return Err(invalid(format!("kernel diagonal at {i} is missing")));
            }
        }
        Ok(NeighborGraph {
            kernel,
            bandwidth,
            radius,
            exponent,
        })
    }

    /// `Ξ_i`: coordinates of `N_i`, one row per neighbor in index order.
    pub fn local_positions(&self, cloud: &PointCloud, i: usize) -> Result<DMatrix<f64>> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange { index: i, len: self.len() });
        }
        if cloud.len() != self.len() {
            return Err(Error::RowCountMismatch {
                expected: self.len(),
                found: cloud.len(),
            });
        }
        let idx = self.neighbors(i);
        Ok(DMatrix::from_fn(idx.len(), cloud.dim(), |r, c| cloud.point(idx[r])[c]))
    }

    pub fn len(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn exponent(&self) -> KernelExponent {
        self.exponent
    }

    /// Sparse kernel matrix including the unit diagonal.
    pub fn kernel(&self) -> &CsrMatrix {
        &self.kernel
    }

    /// `N_i`, sorted, excluding `i`.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.kernel.row(i).0.iter().map(|&j| j as usize).filter(|&j| j != i).collect()
    }

    /// `N_i` with kernel weights, sorted by index.
    pub fn neighborhood(&self, i: usize) -> (Vec<usize>, Vec<f64>) {
        let (idx, val) = self.kernel.row(i);
        idx.iter()
            .zip(val)
            .filter(|(&j, _)| j as usize != i)
            .map(|(&j, &v)| (j as usize, v))
            .unzip()
    }

    /// `N_i ∪ {i}` with kernel weights, sorted by index.
    pub fn closed_neighborhood(&self, i: usize) -> (Vec<usize>, Vec<f64>) {
        let (idx, val) = self.kernel.row(i);
        (idx.iter().map(|&j| j as usize).collect(), val.to_vec())
    }

    pub fn degree(&self, i: usize) -> usize {
        self.kernel.row(i).0.len() - 1
    }
}

#[inline]
fn kernel_value(d2: f64, eps2: f64, exponent: KernelExponent) -> f64 {
    match exponent {
        KernelExponent::Two => (-d2 / eps2).exp(),
        KernelExponent::One => (-d2.sqrt() / eps2).exp(),
    }
}
