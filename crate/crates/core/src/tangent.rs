//! Tangent-space bases by weighted local PCA and the pushforward metric of an
//! embedding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::embedding::Embedding;
use crate::error::{invalid, Error, Result};
use crate::exec::{try_map_range, Parallelism};
use crate::graph::{Laplacian, NeighborGraph, PointCloud};

/// Relative singular-value floor below which a neighborhood has rank `< d`.
pub const PCA_RANK_TOL: f64 = 1e-10;

/// Default floor on the retained eigenvalues of `H_i`.
pub const METRIC_RANK_TOL: f64 = 1e-12;

/// Orthonormal tangent basis `T_i` (`D x d`) and its singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub basis: DMatrix<f64>,
    pub spectrum: Vec<f64>,
}

/// Per-point tangent frames. `None` marks a point skipped as degenerate.
#[derive(Debug, Clone)]
pub struct TangentFrames {
    d: usize,
    frames: Vec<Option<Frame>>,
}

impl TangentFrames {
    pub fn new(d: usize, frames: Vec<Option<Frame>>) -> Self {
        TangentFrames { d, frames }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Frame> {
        self.frames[i].as_ref()
    }

    pub fn basis(&self, i: usize) -> Option<&DMatrix<f64>> {
        self.get(i).map(|f| &f.basis)
    }

    /// Indices of points that have a frame.
    pub fn valid_points(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.frames[i].is_some()).collect()
    }
}

/// Weighted PCA of a neighborhood.
///
/// `points` holds one neighbor per row (`k x D`), `weights` the matching
/// kernel values. Returns the top-`d` right singular vectors of the weighted,
/// centered difference matrix and their singular values.
pub fn local_pca(points: &DMatrix<f64>, weights: &[f64], d: usize, point: usize) -> Result<Frame> {
    let (k, dim) = points.shape();
    if weights.len() != k {
        return Err(invalid(format!("{} weights for {k} neighbors", weights.len())));
    }
    if d == 0 || d > dim {
        return Err(invalid(format!("intrinsic dimension {d} outside 1..={dim}")));
    }
    if k < d {
        return Err(Error::DegenerateNeighborhood {
            index: point,
            reason: format!("{k} neighbors for dimension {d}"),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(invalid(format!("kernel weight {w} at point {point} is not positive")));
    }
    let total: f64 = weights.iter().sum();
    let mut mean = DVector::zeros(dim);
    for (r, &w) in weights.iter().enumerate() {
        mean.axpy(w / total, &points.row(r).transpose(), 1.0);
    }
    let mut z = DMatrix::zeros(k, dim);
    for (r, &w) in weights.iter().enumerate() {
        for c in 0..dim {
            z[(r, c)] = w * (points[(r, c)] - mean[c]) / total;
        }
    }
    let svd = z.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    if order.len() < d {
        return Err(Error::DegenerateNeighborhood {
            index: point,
            reason: format!("rank at most {} < {d}", order.len()),
        });
    }
    let spectrum: Vec<f64> = order[..d].iter().map(|&o| svd.singular_values[o]).collect();
    if !(spectrum[d - 1] > PCA_RANK_TOL * spectrum[0]) {
        return Err(Error::DegenerateNeighborhood {
            index: point,
            reason: format!(
                "singular value {:.3e} of {} is below tolerance relative to {:.3e}",
                spectrum[d - 1],
                d,
                spectrum[0]
            ),
        });
    }
    let mut basis = DMatrix::zeros(dim, d);
    for (c, &o) in order[..d].iter().enumerate() {
        let mut col = vt.row(o).transpose();
        fix_sign(&mut col);
        basis.set_column(c, &col);
    }
    Ok(Frame { basis, spectrum })
}

/// Makes the first entry of `v` that is not negligible positive.
pub(crate) fn fix_sign(v: &mut DVector<f64>) {
    let tiny = 1e-12 * v.amax();
    if let Some(x) = v.iter().find(|x| x.abs() > tiny) {
        if *x < 0.0 {
            v.neg_mut();
        }
    }
}

/// Tangent frames at every point from the neighborhoods `N_i` (excluding `i`).
///
/// With `skip_degenerate`, points whose neighborhood has rank `< d` get no
/// frame and a warning is logged; otherwise the first such point is an error.
pub fn estimate_frames(
    cloud: &PointCloud,
    graph: &NeighborGraph,
    d: usize,
    skip_degenerate: bool,
    mode: Parallelism,
) -> Result<TangentFrames> {
    let all: Vec<usize> = (0..cloud.len()).collect();
    estimate_frames_at(cloud, graph, d, &all, skip_degenerate, mode)
}

/// Like [`estimate_frames`] but only at `points`; other points get no frame.
pub fn estimate_frames_at(
    cloud: &PointCloud,
    graph: &NeighborGraph,
    d: usize,
    points: &[usize],
    skip_degenerate: bool,
    mode: Parallelism,
) -> Result<TangentFrames> {
    if graph.len() != cloud.len() {
        return Err(Error::RowCountMismatch {
            expected: cloud.len(),
            found: graph.len(),
        });
    }
    if let Some(&i) = points.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: cloud.len(),
        });
    }
    let computed = try_map_range(points.len(), mode, |k| {
        let i = points[k];
        let (idx, w) = graph.neighborhood(i);
        let pts = DMatrix::from_fn(idx.len(), cloud.dim(), |r, c| cloud.point(idx[r])[c]);
        match local_pca(&pts, &w, d, i) {
            Ok(f) => Ok(Some(f)),
            Err(e @ Error::DegenerateNeighborhood { .. }) if skip_degenerate => {
                log::warn!("skipping point: {e}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    })?;
    let mut frames = vec![None; cloud.len()];
    for (&i, f) in points.iter().zip(computed) {
        frames[i] = f;
    }
    Ok(TangentFrames { d, frames })
}

/// Pushforward metric at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricEntry {
    /// `G_i = V Λ^{-1} V^T`, `m x m`.
    pub g: DMatrix<f64>,
    /// Top-`d` eigenvectors of `H_i`, `m x d`.
    pub v: DMatrix<f64>,
    /// Top-`d` eigenvalues of `H_i`, decreasing.
    pub lambda: Vec<f64>,
}

/// Pushforward metric from one Laplacian row.
///
/// `l_row[r]` is the Laplacian entry for the neighbor whose centered embedding
/// coordinates `φ(ξ_j) - φ(ξ_i)` form row `r` of `phi_centered` (`k x m`).
/// `H_i = ½ Σ_j L_ij Φ̃_j Φ̃_jᵀ` estimates the dual metric.
pub fn rmetric(l_row: &[f64], phi_centered: &DMatrix<f64>, d: usize, rank_tol: f64, point: usize) -> Result<MetricEntry> {
    let (k, m) = phi_centered.shape();
    if l_row.len() != k {
        return Err(invalid(format!("Laplacian row has {} entries for {k} neighbors", l_row.len())));
    }
    if d == 0 || d > m {
        return Err(invalid(format!("intrinsic dimension {d} outside 1..={m}")));
    }
    let mut h = DMatrix::zeros(m, m);
    for (r, &l) in l_row.iter().enumerate() {
        let row = phi_centered.row(r);
        h.ger(0.5 * l, &row.transpose(), &row.transpose(), 1.0);
    }
    let ht = h.transpose();
    h = (h + ht) * 0.5;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda: Vec<f64> = order[..d].iter().map(|&o| eig.eigenvalues[o]).collect();
    if let Some(&bad) = lambda.iter().find(|&&l| !(l > rank_tol)) {
        return Err(Error::RankDeficientMetric {
            index: point,
            eigenvalue: bad,
            threshold: rank_tol,
        });
    }
    let mut v = DMatrix::zeros(m, d);
    for (c, &o) in order[..d].iter().enumerate() {
        let mut col = eig.eigenvectors.column(o).clone_owned();
        fix_sign(&mut col);
        v.set_column(c, &col);
    }
    let inv = DMatrix::from_diagonal(&DVector::from_iterator(d, lambda.iter().map(|l| l.recip())));
    let g = &v * inv * v.transpose();
    let g = (&g + g.transpose()) * 0.5;
    Ok(MetricEntry { g, v, lambda })
}

/// Centered embedding rows and Laplacian values over the support of row `i`.
pub(crate) fn local_laplacian_data(lap: &Laplacian, embedding: &Embedding, i: usize) -> (Vec<usize>, Vec<f64>, DMatrix<f64>) {
    let (idx, val) = lap.matrix().row(i);
    let idx: Vec<usize> = idx.iter().map(|&j| j as usize).collect();
    let phi = embedding.coords();
    let centered = DMatrix::from_fn(idx.len(), phi.ncols(), |r, c| phi[(idx[r], c)] - phi[(i, c)]);
    (idx, val.to_vec(), centered)
}

/// Pushforward metric at every point listed in `points`.
pub fn pushforward_metrics(
    lap: &Laplacian,
    embedding: &Embedding,
    d: usize,
    points: &[usize],
    mode: Parallelism,
) -> Result<Vec<MetricEntry>> {
    if lap.len() != embedding.len() {
        return Err(Error::RowCountMismatch {
            expected: lap.len(),
            found: embedding.len(),
        });
    }
    try_map_range(points.len(), mode, |p| {
        let i = points[p];
        let (_, l, centered) = local_laplacian_data(lap, embedding, i);
        rmetric(&l, &centered, d, METRIC_RANK_TOL, i)
    })
}
