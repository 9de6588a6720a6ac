use serde::{Deserialize, Serialize};

use super::NeighborGraph;
use crate::error::{invalid, Result};
use crate::sparse::CsrMatrix;

/// Which matrix downstream stages treat as "the Laplacian".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianVariant {
    /// `(4 / eps^2) (W~^{-1} L~ - I)`, the random-walk form.
    #[default]
    RandomWalk,
    /// The renormalized kernel `L~ = W^{-1} K W^{-1}` itself.
    Renormalized,
}

/// Renormalized graph Laplacian of a [`NeighborGraph`].
///
/// Keeps both `L~` and its row sums `w~`, from which the random-walk
/// Laplacian is formed.
#[derive(Debug, Clone)]
pub struct Laplacian {
    renormalized: CsrMatrix,
    row_weights: Vec<f64>,
    matrix: CsrMatrix,
    bandwidth: f64,
}

impl Laplacian {
    pub fn from_graph(graph: &NeighborGraph) -> Self {
        let k = graph.kernel();
        let w = k.row_sums();
        let renormalized = k.map_values(|i, j, v| v / (w[i] * w[j]));
        Laplacian::assemble(renormalized, graph.bandwidth())
    }

    /// Rebuilds the Laplacian from a stored `L~`.
    pub fn from_renormalized(renormalized: CsrMatrix, bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if renormalized.nrows() != renormalized.ncols() {
            return Err(invalid("renormalized kernel must be square"));
        }
        if let Some(i) = renormalized.row_sums().iter().position(|&w| !(w > 0.0)) {
            return Err(invalid(format!("renormalized kernel row {i} has nonpositive sum")));
        }
        Ok(Laplacian::assemble(renormalized, bandwidth))
    }

    fn assemble(renormalized: CsrMatrix, bandwidth: f64) -> Self {
        let row_weights = renormalized.row_sums();
        let scale = 4.0 / (bandwidth * bandwidth);
        let matrix = renormalized.map_values(|i, j, v| {
            let delta = if i == j { 1.0 } else { 0.0 };
            scale * (v / row_weights[i] - delta)
        });
        Laplacian {
            renormalized,
            row_weights,
            matrix,
            bandwidth,
        }
    }

    /// The random-walk Laplacian `L`.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// `L~ = W^{-1} K W^{-1}`.
    pub fn renormalized(&self) -> &CsrMatrix {
        &self.renormalized
    }

    pub fn variant(&self, variant: LaplacianVariant) -> &CsrMatrix {
        match variant {
            LaplacianVariant::RandomWalk => &self.matrix,
            LaplacianVariant::Renormalized => &self.renormalized,
        }
    }

    /// Row sums `w~` of `L~`.
    pub fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `L_i · (f ⊙ g)` restricted to row `i`, i.e. `sum_j L_ij f_j g_j`.
    pub fn apply_row(&self, i: usize, f: impl Fn(usize) -> f64) -> f64 {
        let (idx, val) = self.matrix.row(i);
        idx.iter().zip(val).map(|(&j, &v)| v * f(j as usize)).sum()
    }
}
