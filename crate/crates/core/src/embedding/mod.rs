//! Spectral embedding coordinates from the graph Laplacian, or loaded from disk.

mod lanczos;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_range, Parallelism};
use crate::graph::{Laplacian, LaplacianVariant};

/// Largest problem size solved with a dense eigendecomposition under
/// [`EigenSolver::Auto`].
pub const DENSE_LIMIT: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Computed,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenSolver {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    pub dim: usize,
    pub variant: LaplacianVariant,
    pub solver: EigenSolver,
}

impl EmbeddingParams {
    pub fn new(dim: usize) -> Self {
        EmbeddingParams {
            dim,
            variant: LaplacianVariant::RandomWalk,
            solver: EigenSolver::Auto,
        }
    }
}

/// Embedding coordinates `Φ` (`n x m`), one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    coords: DMatrix<f64>,
    source: EmbeddingSource,
    eigenvalues: Option<Vec<f64>>,
}

impl Embedding {
    pub fn external(coords: DMatrix<f64>) -> Result<Self> {
        check_finite(&coords)?;
        if coords.ncols() == 0 {
            return Err(invalid("embedding needs at least one column"));
        }
        Ok(Embedding {
            coords,
            source: EmbeddingSource::External,
            eigenvalues: None,
        })
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Embedding dimension `m`.
    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    /// Laplacian eigenvalues matching each column, for computed embeddings.
    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.coords.row(i).iter().copied().collect()
    }

    /// Returns a copy with column `k` negated.
    pub fn flip_sign(&self, k: usize) -> Embedding {
        let mut out = self.clone();
        out.coords.column_mut(k).neg_mut();
        out
    }

    /// Keeps only the rows listed in `indices`.
    pub fn select(&self, indices: &[usize]) -> Result<Embedding> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::IndexOutOfRange { index: i, len: self.len() });
        }
        Ok(Embedding {
            coords: self.coords.select_rows(indices),
            source: self.source,
            eigenvalues: self.eigenvalues.clone(),
        })
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, column: j });
            }
        }
    }
    Ok(())
}

/// The `m` nontrivial eigenvectors of the Laplacian closest to zero, each
/// scaled to norm `sqrt(n)` with its first nonzero entry positive.
pub fn spectral_embed(lap: &Laplacian, params: &EmbeddingParams, mode: Parallelism) -> Result<Embedding> {
    let n = lap.len();
    let m = params.dim;
    if m == 0 || m >= n {
        return Err(invalid(format!(
            "embedding dimension must satisfy 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    // Symmetric matrix S whose top eigenvectors give the wanted ones.
    // RandomWalk: S = W~^{-1/2} L~ W~^{-1/2}, v = W~^{-1/2} u, lambda = 4/eps^2 (mu - 1).
    // Renormalized: S = L~, v = u.
    let (sym, back): (crate::sparse::CsrMatrix, Vec<f64>) = match params.variant {
        LaplacianVariant::RandomWalk => {
            let s: Vec<f64> = lap.row_weights().iter().map(|w| w.sqrt().recip()).collect();
            (lap.renormalized().map_values(|i, j, v| v * s[i] * s[j]), s)
        }
        LaplacianVariant::Renormalized => (lap.renormalized().clone(), vec![1.0; n]),
    };
    let solver = match params.solver {
        EigenSolver::Auto if n <= DENSE_LIMIT => EigenSolver::Dense,
        EigenSolver::Auto => EigenSolver::Lanczos,
        s => s,
    };
    let nev = m + 1;
    let (mu, u) = match solver {
        EigenSolver::Dense => dense_top(&sym, nev),
        _ => {
            let scale = sym.norm_inf();
            let opts = lanczos::LanczosOptions {
                nev,
                max_basis: (4 * nev + 20).max(40),
                tol: 1e-12,
                max_restarts: 5000,
                seed: 0x5eed,
            };
            let apply = |x: &[f64], y: &mut [f64]| {
                let out = map_range(n, mode, |i| {
                    let (idx, val) = sym.row(i);
                    idx.iter().zip(val).map(|(&j, &v)| v * x[j as usize]).sum::<f64>()
                });
                y.copy_from_slice(&out);
            };
            lanczos::largest_eigenpairs(n, apply, scale, &opts)?
        }
    };

    let target = lap.variant(params.variant);
    let scale_factor = match params.variant {
        LaplacianVariant::RandomWalk => 4.0 / (lap.bandwidth() * lap.bandwidth()),
        LaplacianVariant::Renormalized => 1.0,
    };
    let norm = target.norm_inf();
    let mut coords = DMatrix::zeros(n, m);
    let mut eigenvalues = Vec::with_capacity(m);
    for k in 0..m {
        let lambda = match params.variant {
            LaplacianVariant::RandomWalk => scale_factor * (mu[k + 1] - 1.0),
            LaplacianVariant::Renormalized => mu[k + 1],
        };
        let mut v: Vec<f64> = (0..n).map(|i| back[i] * u[(i, k + 1)]).collect();
        normalize(&mut v);
        let mut lv = vec![0.0; n];
        target.mul_vec(&v, &mut lv);
        let vmax = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let residual = lv.iter().zip(&v).map(|(a, b)| (a - lambda * b).abs()).fold(0.0f64, f64::max) / vmax;
        if residual > 1e-8 * norm {
            return Err(Error::EigenNonConvergence { residual, iterations: 0 });
        }
        coords.set_column(k, &nalgebra::DVector::from_vec(v));
        eigenvalues.push(lambda);
    }
    Ok(Embedding {
        coords,
        source: EmbeddingSource::Computed,
        eigenvalues: Some(eigenvalues),
    })
}

fn dense_top(sym: &crate::sparse::CsrMatrix, nev: usize) -> (Vec<f64>, DMatrix<f64>) {
    let mut a = sym.to_dense();
    // Exact symmetry for the dense solver.
    let at = a.transpose();
    a = (a + at) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let vals = order[..nev].iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = eig.eigenvectors.select_columns(&order[..nev]);
    (vals, vecs)
}

/// Unit norm times `sqrt(n)`, first nonzero entry positive.
fn normalize(v: &mut [f64]) {
    let n = v.len() as f64;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tiny = 1e-12 * norm;
    let sign = v.iter().find(|x| x.abs() > tiny).map_or(1.0, |x| x.signum());
    let s = sign * n.sqrt() / norm;
    v.iter_mut().for_each(|x| *x *= s);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphParams, NeighborGraph, PointCloud};

    fn circle_lap(n: usize, eps: f64) -> Laplacian {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let c = PointCloud::from_rows(&rows).unwrap();
        Laplacian::from_graph(&NeighborGraph::build(&c, &GraphParams::new(eps), Parallelism::Sequential).unwrap())
    }

    #[test]
    fn two_identical_points() {
        let c = PointCloud::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let g = NeighborGraph::build(&c, &GraphParams::new(1.0), Parallelism::Sequential).unwrap();
        let lap = Laplacian::from_graph(&g);
        let e = spectral_embed(&lap, &EmbeddingParams::new(1), Parallelism::Sequential).unwrap();
        assert!((e.eigenvalues().unwrap()[0] + 4.0).abs() < 1e-12);
        assert!((e.coords()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((e.coords()[(1, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn m_equal_n_rejected() {
        let c = PointCloud::from_rows(&[vec![0.0], vec![0.1]]).unwrap();
        let g = NeighborGraph::build(&c, &GraphParams::new(1.0), Parallelism::Sequential).unwrap();
        let lap = Laplacian::from_graph(&g);
        assert!(matches!(
            spectral_embed(&lap, &EmbeddingParams::new(2), Parallelism::Sequential),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn dense_and_lanczos_agree() {
        let lap = circle_lap(600, 0.08);
        let mut p = EmbeddingParams::new(4);
        p.solver = EigenSolver::Dense;
        let a = spectral_embed(&lap, &p, Parallelism::Sequential).unwrap();
        p.solver = EigenSolver::Lanczos;
        let b = spectral_embed(&lap, &p, Parallelism::Parallel).unwrap();
        for (x, y) in a.eigenvalues().unwrap().iter().zip(b.eigenvalues().unwrap()) {
            assert!((x - y).abs() < 1e-6 * x.abs().max(1.0));
        }
    }

    #[test]
    fn sign_convention_and_scale() {
        let lap = circle_lap(300, 0.1);
        let e = spectral_embed(&lap, &EmbeddingParams::new(2), Parallelism::Sequential).unwrap();
        for k in 0..2 {
            let col = e.coords().column(k);
            assert!((col.norm() - 300f64.sqrt()).abs() < 1e-9);
            let first = col.iter().find(|x| x.abs() > 1e-9).unwrap();
            assert!(*first > 0.0);
        }
    }
}
