//! Recovery-theory quantities for a group lasso problem and a candidate
//! support: incoherence, internal colinearity, noise level and the
//! sufficient conditions built from them.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::dictionary::GradientBundle;
use crate::error::{invalid, Error, Result};
use crate::flasso::{solve, LassoProblem, LassoSolution, SolveOptions};

/// Tolerance on `||x_ij|| ∈ {0, 1}` for the unit-norm precondition.
pub const UNIT_NORM_TOL: f64 = 1e-8;

/// Default relative tolerance for numerical rank.
pub const RANK_TOL: f64 = 1e-8;

fn check_support(problem: &LassoProblem, support: &[usize]) -> Result<Vec<bool>> {
    let p = problem.p();
    let mut member = vec![false; p];
    for &j in support {
        if j >= p {
            return Err(Error::IndexOutOfRange { index: j, len: p });
        }
        if member[j] {
            return Err(invalid(format!("group {j} listed twice in the support")));
        }
        member[j] = true;
    }
    if support.is_empty() || support.len() == p {
        return Err(invalid("the support must be a nonempty proper subset of the groups"));
    }
    Ok(member)
}

/// `μ = max_{i, j ∈ S, j' ∉ S} |x_ijᵀ x_ij'|`. Columns must have norm 0 or 1.
pub fn incoherence(problem: &LassoProblem, support: &[usize]) -> Result<f64> {
    let member = check_support(problem, support)?;
    let mut mu: f64 = 0.0;
    for (i, x) in problem.x().iter().enumerate() {
        for j in 0..problem.p() {
            let norm = x.column(j).norm();
            if norm > UNIT_NORM_TOL && (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(invalid(format!("column {j} at point {i} has norm {norm}, expected 0 or 1")));
            }
        }
        for &j in support {
            for jp in (0..problem.p()).filter(|&jp| !member[jp]) {
                mu = mu.max(x.column(j).dot(&x.column(jp)).abs());
            }
        }
    }
    Ok(mu)
}

/// `Σ_i = x_iSᵀ x_iS`, the Gram block of the support at point `i`.
pub fn support_gram(problem: &LassoProblem, support: &[usize], i: usize) -> DMatrix<f64> {
    let xs = problem.x()[i].select_columns(support);
    xs.transpose() * xs
}

/// `ν = 1 / min_i λ_min(Σ_i)`, the largest eigenvalue of `Σ⁻¹`.
pub fn internal_colinearity(problem: &LassoProblem, support: &[usize]) -> Result<f64> {
    check_support(problem, support)?;
    let mut lowest = f64::INFINITY;
    for i in 0..problem.n() {
        let gram = support_gram(problem, support, i);
        let scale = gram.diagonal().amax();
        let ev = SymmetricEigen::new(gram).eigenvalues.min();
        if !(ev > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::SingularGram { index: i });
        }
        lowest = lowest.min(ev);
    }
    Ok(1.0 / lowest)
}

/// Conditions for exact support recovery with an error bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBoundReport {
    /// `1 - μν√s`; the incoherence condition needs it positive.
    pub incoherence_margin: f64,
    /// `c` implied by the penalty through `λ_eff = (c - 1) σ sqrt(n r)`.
    pub c_implied: f64,
    /// `1 + 1 / (1 - μν√s)`; the penalty condition needs `c_implied > c_min`.
    pub c_min: f64,
    pub penalty_condition: bool,
    /// `min_{j∈S} ||β*_j|| - c σ sqrt(n r) (1 + √s)`, when the truth is known.
    pub magnitude_margin: Option<f64>,
    pub magnitude_condition: Option<bool>,
    /// `max_{j∈S} ||β̂_j - β*_j||`, when the truth is known.
    pub max_error: Option<f64>,
    /// `max_error < c σ sqrt(n r) (1 + √s)`.
    pub error_bound_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryCertificate {
    pub mu: f64,
    pub nu: f64,
    pub sigma: f64,
    /// Whether `sigma` came from the true noise or from solution residuals.
    pub sigma_from_truth: bool,
    pub s: usize,
    pub lambda: f64,
    /// `λ / sqrt(m n)`, the penalty on each group norm.
    pub effective_lambda: f64,
    /// `μν√s + σ sqrt(n r) / λ_eff`.
    pub condition_value: f64,
    pub condition_holds: bool,
    /// `μνs + σ sqrt(n r) / λ_eff`, which bounds the off-support dual norm
    /// for any `s`.
    pub strict_condition_value: f64,
    pub strict_holds: bool,
    /// `(c_min - 1) σ sqrt(n r)`, the smallest effective penalty allowed by
    /// the incoherence margin.
    pub error_bound_lambda: f64,
    /// `c σ sqrt(n r) (1 + √s)` at the implied `c`.
    pub beta_min_required: f64,
    pub error_bound: ErrorBoundReport,
    /// True when the solution at `λ` has no active group outside `S`.
    pub off_support_zero: bool,
}

/// Evaluates the recovery conditions at penalty `lambda`.
///
/// With `beta_true`, the noise level is computed from the true residuals and
/// the magnitude and error-bound conditions are evaluated; otherwise `σ` is
/// estimated from the residuals of the solution at `lambda`. `solution` may
/// supply a precomputed solution at `lambda`.
pub fn check_recovery_conditions(
    problem: &LassoProblem,
    support: &[usize],
    lambda: f64,
    beta_true: Option<&[DMatrix<f64>]>,
    solution: Option<&LassoSolution>,
) -> Result<RecoveryCertificate> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    let mu = incoherence(problem, support)?;
    let nu = internal_colinearity(problem, support)?;
    let s = support.len();
    let (n, r) = (problem.n(), problem.rows());
    let owned;
    let sol = match solution {
        Some(sol) => sol,
        None => {
            owned = solve(problem, lambda, &SolveOptions::default())?;
            &owned
        }
    };
    if let Some(b) = beta_true {
        if b.len() != n || b.iter().any(|b| b.shape() != (problem.p(), problem.m())) {
            return Err(invalid("true coefficients have the wrong shape"));
        }
    }
    let resid = problem.residuals(beta_true.unwrap_or(&sol.beta));
    let sigma = (resid.iter().map(|e| e.norm_squared()).sum::<f64>() / (n * r) as f64).sqrt();
    let lam = problem.effective_penalty(lambda);
    let noise_scale = sigma * ((n * r) as f64).sqrt();
    let sqrt_s = (s as f64).sqrt();

    let condition_value = mu * nu * sqrt_s + noise_scale / lam;
    let strict_condition_value = mu * nu * s as f64 + noise_scale / lam;
    let incoherence_margin = 1.0 - mu * nu * sqrt_s;
    let c_min = 1.0 + 1.0 / incoherence_margin;
    let c_implied = if noise_scale > 0.0 {
        1.0 + lam / noise_scale
    } else {
        f64::INFINITY
    };
    let bound = c_implied * noise_scale * (1.0 + sqrt_s);

    let (magnitude_margin, max_error) = match beta_true {
        Some(b) => {
            let true_norms = crate::flasso::group_norms(b);
            let min_true = support.iter().map(|&j| true_norms[j]).fold(f64::INFINITY, f64::min);
            let err = support
                .iter()
                .map(|&j| {
                    b.iter()
                        .zip(&sol.beta)
                        .map(|(t, e)| (t.row(j) - e.row(j)).norm_squared())
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            (Some(min_true - bound), Some(err))
        }
        None => (None, None),
    };
    let member = check_support(problem, support)?;
    let off_support_zero = (0..problem.p()).all(|j| member[j] || sol.group_norms[j] == 0.0);

    Ok(RecoveryCertificate {
        mu,
        nu,
        sigma,
        sigma_from_truth: beta_true.is_some(),
        s,
        lambda,
        effective_lambda: lam,
        condition_value,
        condition_holds: condition_value < 1.0,
        strict_condition_value,
        strict_holds: strict_condition_value < 1.0,
        error_bound_lambda: (c_min - 1.0) * noise_scale,
        beta_min_required: bound,
        error_bound: ErrorBoundReport {
            incoherence_margin,
            c_implied,
            c_min,
            penalty_condition: incoherence_margin > 0.0 && c_implied > c_min,
            magnitude_condition: magnitude_margin.map(|m| m > 0.0),
            magnitude_margin,
            error_bound_holds: max_error.map(|e| e < bound),
            max_error,
        },
        off_support_zero,
    })
}

/// Per-point comparison of `rank[Dg_S, Dg_S']` with `rank Dg_S'`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub holds: Vec<bool>,
    pub fraction: f64,
}

/// Numerical rank with singular values `>= tol * σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.max();
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&v| v >= tol * top).count()
}

/// Checks whether the gradients of `S` lie in the span of those of `S'` at
/// every point of the bundle. Shared columns are counted once.
pub fn rank_dependency_check(bundle: &GradientBundle, s: &[usize], s_prime: &[usize], tol: f64) -> Result<RankReport> {
    if bundle.is_empty() {
        return Err(invalid("no points to check"));
    }
    let p = bundle.gradients[0].ncols();
    if let Some(&j) = s.iter().chain(s_prime).find(|&&j| j >= p) {
        return Err(Error::IndexOutOfRange { index: j, len: p });
    }
    let mut union: Vec<usize> = s.iter().chain(s_prime).copied().collect();
    union.sort_unstable();
    union.dedup();
    let holds: Vec<bool> = bundle
        .gradients
        .iter()
        .map(|g| numerical_rank(&g.select_columns(&union), tol) == numerical_rank(&g.select_columns(s_prime), tol))
        .collect();
    let fraction = holds.iter().filter(|&&h| h).count() as f64 / holds.len() as f64;
    Ok(RankReport { holds, fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn problem(xs: Vec<DMatrix<f64>>, m: usize) -> LassoProblem {
        let r = xs[0].nrows();
        let p = xs[0].ncols();
        let ys = vec![DMatrix::zeros(r, m); xs.len()];
        LassoProblem::new(xs, ys, LassoProblem::default_names(p)).unwrap()
    }

    fn random_unit_design(seed: u64, n: usize, r: usize, p: usize) -> Vec<DMatrix<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = DMatrix::from_fn(r, p, |_, _| StandardNormal.sample(&mut rng));
                crate::dictionary::unit_normalize(&x)
            })
            .collect()
    }

    #[test]
    fn orthonormal_design() {
        let pb = problem(vec![DMatrix::identity(3, 3); 4], 1);
        assert_eq!(incoherence(&pb, &[0, 1]).unwrap(), 0.0);
        assert_eq!(internal_colinearity(&pb, &[0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn identical_columns_across_support() {
        let x = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let pb = problem(vec![x], 1);
        assert_eq!(incoherence(&pb, &[0]).unwrap(), 1.0);
    }

    #[test]
    fn sixty_degrees() {
        let c = 0.5f64;
        let x = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, c, (1.0 - c * c).sqrt(), 0.0, 0.0]);
        let pb = problem(vec![x], 1);
        assert_relative_eq!(internal_colinearity(&pb, &[0, 1]).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_or_full_support_rejected() {
        let pb = problem(vec![DMatrix::identity(2, 2)], 1);
        assert!(incoherence(&pb, &[]).is_err());
        assert!(incoherence(&pb, &[0, 1]).is_err());
    }

    #[test]
    fn non_unit_columns_rejected() {
        let pb = problem(vec![DMatrix::identity(2, 2) * 2.0], 1);
        assert!(incoherence(&pb, &[0]).is_err());
    }

    #[test]
    fn singular_gram_names_point() {
        let good = DMatrix::identity(2, 3);
        let bad = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let pb = problem(vec![good, bad], 1);
        assert!(matches!(internal_colinearity(&pb, &[0, 1]), Err(Error::SingularGram { index: 1 })));
    }

    #[test]
    fn noiseless_orthonormal_certificate() {
        let x = DMatrix::<f64>::identity(3, 3);
        let y = DMatrix::from_column_slice(3, 1, &[2.0, -1.0, 0.0]);
        let pb = LassoProblem::new(vec![x.clone(), x], vec![y.clone(), y], LassoProblem::default_names(3)).unwrap();
        let truth = vec![DMatrix::from_column_slice(3, 1, &[2.0, -1.0, 0.0]); 2];
        let c = check_recovery_conditions(&pb, &[0, 1], 0.1, Some(&truth), None).unwrap();
        assert_eq!(c.condition_value, 0.0);
        assert!(c.condition_holds && c.strict_holds && c.off_support_zero);
    }

    #[test]
    fn rank_examples() {
        let pts = [0.5, -1.0, 2.0];
        let bundle = GradientBundle {
            points: vec![0, 1, 2],
            gradients: pts
                .iter()
                .map(|&x1| DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 2.0 * x1, 0.0, 0.0, 1.0]))
                .collect(),
        };
        // columns: ξ1, ξ1², ξ2
        assert_eq!(rank_dependency_check(&bundle, &[0], &[0], RANK_TOL).unwrap().fraction, 1.0);
        assert_eq!(rank_dependency_check(&bundle, &[0], &[1], RANK_TOL).unwrap().fraction, 1.0);
        assert_eq!(rank_dependency_check(&bundle, &[2], &[0], RANK_TOL).unwrap().fraction, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn nu_matches_block_diagonal_inverse(seed in 0u64..10_000) {
            let pb = problem(random_unit_design(seed, 4, 3, 4), 1);
            let s = [0, 2];
            let nu = internal_colinearity(&pb, &s).unwrap();
            let mut full = DMatrix::zeros(8, 8);
            for i in 0..4 {
                full.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&support_gram(&pb, &s, i));
            }
            let inv = full.try_inverse().unwrap();
            let direct = SymmetricEigen::new((&inv + inv.transpose()) * 0.5).eigenvalues.max();
            prop_assert!((nu - direct).abs() <= 1e-10 * direct);
        }

        #[test]
        fn mu_invariant_under_rebasing(seed in 0u64..10_000) {
            let pb = problem(random_unit_design(seed, 5, 3, 4), 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let gammas: Vec<DMatrix<f64>> = (0..5)
                .map(|_| DMatrix::from_fn(3, 3, |_, _| StandardNormal.sample(&mut rng)).qr().q())
                .collect();
            let a = incoherence(&pb, &[1]).unwrap();
            let b = incoherence(&pb.rebase(&gammas).unwrap(), &[1]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
