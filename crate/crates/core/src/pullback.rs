//! Tangent-space gradients of the embedding coordinates via the Riemannian
//! pull-back.

use nalgebra::DMatrix;

use crate::embedding::Embedding;
use crate::error::{invalid, Error, Result};
use crate::exec::{try_map_range, Parallelism};
use crate::graph::{Laplacian, PointCloud};
use crate::tangent::{local_laplacian_data, rmetric, TangentFrames, METRIC_RANK_TOL};

/// `cond(A Aᵀ)` above which a solution is flagged as ill-conditioned.
pub const ILL_CONDITIONED: f64 = 1e12;

/// Gradient estimate at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PullbackEntry {
    /// `Y_i`, `d x m`: column `k` is `grad_T φ_k(ξ_i)` in the basis `T_i`.
    pub y: DMatrix<f64>,
    /// `cond(A_i A_iᵀ)`.
    pub condition: f64,
}

impl PullbackEntry {
    pub fn ill_conditioned(&self) -> bool {
        self.condition > ILL_CONDITIONED
    }
}

/// Solves `A_iᵀ Y_i = B_iᵀ G_i` in the least-squares sense.
///
/// `basis` is `T_i` (`D x d`), `xi_local` the neighbor positions (`k x D`),
/// `phi_local` the neighbor embedding coordinates (`k x m`), and `g` the
/// pushforward metric `G_i` (`m x m`).
pub fn pullback_dphi(
    basis: &DMatrix<f64>,
    xi_local: &DMatrix<f64>,
    xi_i: &[f64],
    phi_local: &DMatrix<f64>,
    phi_i: &[f64],
    g: &DMatrix<f64>,
    point: usize,
) -> Result<PullbackEntry> {
    let (dim, d) = basis.shape();
    let (k, m) = phi_local.shape();
    if xi_local.shape() != (k, dim) || xi_i.len() != dim || phi_i.len() != m || g.shape() != (m, m) {
        return Err(invalid(format!("pullback inputs at point {point} have inconsistent shapes")));
    }
    if k < d {
        return Err(Error::DegenerateNeighborhood {
            index: point,
            reason: format!("{k} neighbors for dimension {d}"),
        });
    }
    // Aᵀ (k x d) and Bᵀ (k x m).
    let diff = DMatrix::from_fn(k, dim, |r, c| xi_local[(r, c)] - xi_i[c]);
    let at = diff * basis;
    let bt = DMatrix::from_fn(k, m, |r, c| phi_local[(r, c)] - phi_i[c]);

    let sv = at.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let rank_tol = f64::EPSILON * (k.max(d) as f64) * smax;
    if !(smin > rank_tol) {
        return Err(Error::DegenerateNeighborhood {
            index: point,
            reason: format!("projected differences have rank < {d}"),
        });
    }
    let condition = (smax / smin).powi(2);
    if condition > ILL_CONDITIONED {
        log::warn!("point {point}: cond(A Aᵀ) = {condition:.3e}");
    }

    let rhs = bt * g;
    let qr = at.qr();
    let qt_rhs = qr.q().transpose() * rhs;
    let y = qr.r().solve_upper_triangular(&qt_rhs).ok_or(Error::DegenerateNeighborhood {
        index: point,
        reason: "singular triangular factor".into(),
    })?;
    Ok(PullbackEntry { y, condition })
}

/// Per-point gradients `Y_i` aligned with `points`.
#[derive(Debug, Clone)]
pub struct CoordinateGradients {
    pub points: Vec<usize>,
    pub entries: Vec<PullbackEntry>,
}

impl CoordinateGradients {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ill_conditioned_count(&self) -> usize {
        self.entries.iter().filter(|e| e.ill_conditioned()).count()
    }
}

/// Metric and pull-back at each listed point, over the support of its
/// Laplacian row.
pub fn pullback_gradients(
    cloud: &PointCloud,
    lap: &Laplacian,
    embedding: &Embedding,
    frames: &TangentFrames,
    points: &[usize],
    mode: Parallelism,
) -> Result<CoordinateGradients> {
    if embedding.len() != cloud.len() {
        return Err(Error::RowCountMismatch {
            expected: cloud.len(),
            found: embedding.len(),
        });
    }
    if embedding.dim() < frames.dim() {
        return Err(invalid(format!(
            "embedding dimension {} is smaller than intrinsic dimension {}",
            embedding.dim(),
            frames.dim()
        )));
    }
    let entries = try_map_range(points.len(), mode, |p| {
        let i = points[p];
        let basis = frames.basis(i).ok_or_else(|| invalid(format!("point {i} has no tangent frame")))?;
        let (idx, l, centered) = local_laplacian_data(lap, embedding, i);
        let metric = rmetric(&l, &centered, frames.dim(), METRIC_RANK_TOL, i)?;
        let xi_local = DMatrix::from_fn(idx.len(), cloud.dim(), |r, c| cloud.point(idx[r])[c]);
        let phi_local = embedding.coords().select_rows(&idx);
        pullback_dphi(basis, &xi_local, cloud.point(i), &phi_local, &embedding.point(i), &metric.g, i)
    })?;
    Ok(CoordinateGradients {
        points: points.to_vec(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng)).qr().q()
    }

    #[test]
    fn scalar_hand_instance() {
        let basis = DMatrix::from_element(1, 1, 1.0);
        let xi = DMatrix::from_row_slice(2, 1, &[0.1, -0.1]);
        let phi = DMatrix::from_row_slice(2, 1, &[0.2, -0.2]);
        let g = DMatrix::from_element(1, 1, 50.0);
        let e = pullback_dphi(&basis, &xi, &[0.0], &phi, &[0.0], &g, 0).unwrap();
        assert_relative_eq!(e.y[(0, 0)], 100.0, max_relative = 1e-12);
    }

    #[test]
    fn rank_deficient_differences() {
        let basis = DMatrix::<f64>::identity(2, 2);
        let xi = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, -1.0, 0.0]);
        let phi = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let g = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(
            pullback_dphi(&basis, &xi, &[0.0, 0.0], &phi, &[0.0], &g, 9),
            Err(Error::DegenerateNeighborhood { index: 9, .. })
        ));
    }

    fn random_instance(seed: u64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = orthogonal(4, &mut rng).columns(0, 2).clone_owned();
        let xi = DMatrix::from_fn(10, 4, |_, _| StandardNormal.sample(&mut rng));
        let phi = DMatrix::from_fn(10, 3, |_, _| StandardNormal.sample(&mut rng));
        let a: DMatrix<f64> = DMatrix::from_fn(3, 3, |_, _| StandardNormal.sample(&mut rng));
        let g: DMatrix<f64> = &a * a.transpose();
        (basis, xi, phi, g, rng)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn basis_equivariance(seed in 0u64..10_000) {
            let (basis, xi, phi, g, mut rng) = random_instance(seed);
            let gamma = orthogonal(2, &mut rng);
            let a = pullback_dphi(&basis, &xi, &[0.0; 4], &phi, &[0.0; 3], &g, 0).unwrap();
            let b = pullback_dphi(&(&basis * &gamma), &xi, &[0.0; 4], &phi, &[0.0; 3], &g, 0).unwrap();
            let expected = gamma.transpose() * &a.y;
            prop_assert!((&b.y - &expected).amax() <= 1e-10 * expected.amax().max(1.0));
        }

        #[test]
        fn embedding_rotation_equivariance(seed in 0u64..10_000) {
            let (basis, xi, phi, g, mut rng) = random_instance(seed);
            let q = orthogonal(3, &mut rng);
            let a = pullback_dphi(&basis, &xi, &[0.0; 4], &phi, &[0.0; 3], &g, 0).unwrap();
            let gq = &q * &g * q.transpose();
            let b = pullback_dphi(&basis, &xi, &[0.0; 4], &(&phi * q.transpose()), &[0.0; 3], &gq, 0).unwrap();
            let expected = &a.y * q.transpose();
            prop_assert!((&b.y - &expected).amax() <= 1e-10 * expected.amax().max(1.0));
        }
    }
}
