//! Group lasso over dictionary gradients, solved by block coordinate descent
//! with a duality-gap certificate.

mod bcd;
mod path;

pub use path::{geometric_grid, regularization_path, select_support, PathOptions, Selection};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, Error, Result};

use bcd::{anderson, Flat};

/// Default cap on full sweeps over the groups.
pub const MAX_SWEEPS: usize = 100_000;

/// Per-point designs `X_i` (`r x p`) and responses `Y_i` (`r x m`).
///
/// Group `j` collects `β_ijk` over all points `i` and coordinates `k`; the
/// penalty is `λ / sqrt(m n) Σ_j ||β_j||`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoProblem {
    x: Vec<DMatrix<f64>>,
    y: Vec<DMatrix<f64>>,
    names: Vec<String>,
}

impl LassoProblem {
    pub fn new(x: Vec<DMatrix<f64>>, y: Vec<DMatrix<f64>>, names: Vec<String>) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(invalid(format!("{} designs for {} responses", x.len(), y.len())));
        }
        let (r, p) = x[0].shape();
        let m = y[0].ncols();
        if p == 0 || m == 0 || r == 0 {
            return Err(invalid("design and response must be non-empty"));
        }
        for (i, (xi, yi)) in x.iter().zip(&y).enumerate() {
            if xi.shape() != (r, p) || yi.shape() != (r, m) {
                return Err(invalid(format!(
                    "point {i}: design {:?} / response {:?}, expected ({r}, {p}) / ({r}, {m})",
                    xi.shape(),
                    yi.shape()
                )));
            }
            if let Some(k) = xi.iter().chain(yi.iter()).position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i, column: k });
            }
        }
        if names.len() != p {
            return Err(invalid(format!("{} group names for {p} groups", names.len())));
        }
        Ok(LassoProblem { x, y, names })
    }

    /// Names `g0, g1, …` for each group.
    pub fn default_names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("g{j}")).collect()
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Rows per point (`d`, or `D` in the flat form).
    pub fn rows(&self) -> usize {
        self.x[0].nrows()
    }

    pub fn p(&self) -> usize {
        self.x[0].ncols()
    }

    pub fn m(&self) -> usize {
        self.y[0].ncols()
    }

    pub fn x(&self) -> &[DMatrix<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[DMatrix<f64>] {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `λ / sqrt(m n)`.
    pub fn effective_penalty(&self, lambda: f64) -> f64 {
        lambda / ((self.m() * self.n()) as f64).sqrt()
    }

    /// Smallest `λ` at which the zero solution is optimal.
    pub fn lambda_max(&self) -> f64 {
        let scale = ((self.m() * self.n()) as f64).sqrt();
        (0..self.p()).map(|j| group_correlation_norm(self, j, &self.y)).fold(0.0, f64::max) * scale
    }

    /// `J_λ(β) = ½ Σ ||Y_i - X_i β_i||_F² + λ/sqrt(mn) Σ_j ||β_j||`.
    pub fn objective(&self, beta: &[DMatrix<f64>], lambda: f64) -> f64 {
        let fit: f64 = (0..self.n()).map(|i| (&self.y[i] - &self.x[i] * &beta[i]).norm_squared()).sum();
        0.5 * fit + self.effective_penalty(lambda) * group_norms(beta).iter().sum::<f64>()
    }

    pub fn residuals(&self, beta: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        (0..self.n()).map(|i| &self.y[i] - &self.x[i] * &beta[i]).collect()
    }

    /// Replaces `(X_i, Y_i)` by `(Γ_iᵀ X_i, Γ_iᵀ Y_i)`.
    pub fn rebase(&self, gammas: &[DMatrix<f64>]) -> Result<LassoProblem> {
        if gammas.len() != self.n() {
            return Err(invalid("one change of basis per point is required"));
        }
        LassoProblem::new(
            self.x.iter().zip(gammas).map(|(x, g)| g.transpose() * x).collect(),
            self.y.iter().zip(gammas).map(|(y, g)| g.transpose() * y).collect(),
            self.names.clone(),
        )
    }

    /// Keeps only the listed points.
    pub fn subset(&self, points: &[usize]) -> Result<LassoProblem> {
        LassoProblem::new(
            points.iter().map(|&i| self.x[i].clone()).collect(),
            points.iter().map(|&i| self.y[i].clone()).collect(),
            self.names.clone(),
        )
    }
}

/// `||X_jᵀ R||`: Frobenius norm of the `n x m` block with rows `x_ijᵀ R_i`.
fn group_correlation_norm(problem: &LassoProblem, j: usize, r: &[DMatrix<f64>]) -> f64 {
    problem
        .x
        .iter()
        .zip(r)
        .map(|(x, r)| (x.column(j).transpose() * r).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// `||β_j||` over points and coordinates.
pub fn group_norms(beta: &[DMatrix<f64>]) -> Vec<f64> {
    let p = beta.first().map_or(0, |b| b.nrows());
    (0..p)
        .map(|j| beta.iter().map(|b| b.row(j).norm_squared()).sum::<f64>().sqrt())
        .collect()
}

/// `||β_{j·k}||` for each group `j` and embedding coordinate `k`.
pub fn coordinate_norms(beta: &[DMatrix<f64>]) -> Vec<Vec<f64>> {
    let (p, m) = beta.first().map_or((0, 0), |b| b.shape());
    (0..p)
        .map(|j| {
            (0..m)
                .map(|k| beta.iter().map(|b| b[(j, k)] * b[(j, k)]).sum::<f64>().sqrt())
                .collect()
        })
        .collect()
}

/// Groups whose norm exceeds `1e-8` times the largest group norm.
pub fn support_of(norms: &[f64]) -> Vec<usize> {
    let top = norms.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return Vec::new();
    }
    (0..norms.len()).filter(|&j| norms[j] > 1e-8 * top).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Stop once `gap <= tol (1 + |J|)`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Record the objective after every sweep.
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_sweeps: MAX_SWEEPS,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoSolution {
    pub lambda: f64,
    /// `β_i` per point, `p x m`.
    #[serde(skip)]
    pub beta: Vec<DMatrix<f64>>,
    pub group_norms: Vec<f64>,
    pub coordinate_norms: Vec<Vec<f64>>,
    pub support: Vec<usize>,
    pub objective: f64,
    pub duality_gap: f64,
    pub sweeps: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

/// Solves the group lasso at `lambda` from a zero start.
pub fn solve(problem: &LassoProblem, lambda: f64, opts: &SolveOptions) -> Result<LassoSolution> {
    solve_from(problem, lambda, None, opts)
}

/// Solves the group lasso at `lambda`, optionally warm-started.
pub fn solve_from(problem: &LassoProblem, lambda: f64, start: Option<&[DMatrix<f64>]>, opts: &SolveOptions) -> Result<LassoSolution> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let (n, p, m) = (problem.n(), problem.p(), problem.m());
    let lam_eff = problem.effective_penalty(lambda);
    match start {
        Some(b) if b.len() == n && b.iter().all(|b| b.shape() == (p, m)) => {}
        Some(_) => return Err(invalid("warm start has the wrong shape")),
        None => {}
    }
    let mut w = Flat::new(problem, start);
    let mut trace = Vec::new();
    let mut objective = w.objective(lam_eff);
    let mut gap;
    let mut sweeps = 0;
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(ANDERSON_DEPTH + 1);
    loop {
        if sweeps % GAP_INTERVAL == 0 || sweeps == opts.max_sweeps {
            w.refresh();
            objective = w.objective(lam_eff);
            gap = w.duality_gap(objective, lam_eff);
            if gap <= opts.tol * (1.0 + objective.abs()) {
                break;
            }
            if sweeps == opts.max_sweeps {
                return Err(Error::SolverNonConvergence { gap, sweeps });
            }
        }
        w.sweep(lam_eff);
        sweeps += 1;
        let next = w.objective(lam_eff);
        debug_assert!(
            next <= objective + 1e-9 * (1.0 + objective.abs()),
            "objective increased: {objective} -> {next}"
        );
        objective = next;

        history.push(w.beta.clone());
        if history.len() == ANDERSON_DEPTH + 1 {
            if let Some(candidate) = anderson(&history) {
                let resid = w.residuals(&candidate);
                let value = w.objective_of(&candidate, &resid, lam_eff);
                if value < objective {
                    w.beta = candidate;
                    w.resid = resid;
                    objective = value;
                }
            }
            history.clear();
        }
        if opts.trace {
            trace.push(objective);
        }
    }
    let beta = w.matrices();
    let norms = group_norms(&beta);
    Ok(LassoSolution {
        lambda,
        support: support_of(&norms),
        coordinate_norms: coordinate_norms(&beta),
        group_norms: norms,
        beta,
        objective,
        duality_gap: gap,
        sweeps,
        objective_trace: trace,
    })
}

/// Sweeps between duality-gap evaluations.
const GAP_INTERVAL: usize = 5;

/// Number of sweeps combined by each extrapolation.
const ANDERSON_DEPTH: usize = 5;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn scalar(x: f64, y: f64) -> LassoProblem {
        LassoProblem::new(
            vec![DMatrix::from_element(1, 1, x)],
            vec![DMatrix::from_element(1, 1, y)],
            LassoProblem::default_names(1),
        )
        .unwrap()
    }

    pub(crate) fn random_problem(seed: u64, n: usize, r: usize, p: usize, m: usize) -> LassoProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        let x = (0..n).map(|_| DMatrix::from_fn(r, p, |_, _| g())).collect();
        let y = (0..n).map(|_| DMatrix::from_fn(r, m, |_, _| g())).collect();
        LassoProblem::new(x, y, LassoProblem::default_names(p)).unwrap()
    }

    #[test]
    fn soft_threshold_scalar() {
        let s = solve(&scalar(1.0, 1.0), 0.3, &SolveOptions::default()).unwrap();
        assert_relative_eq!(s.beta[0][(0, 0)], 0.7, epsilon = 1e-10);
    }

    #[test]
    fn lambda_max_scalar() {
        assert_eq!(scalar(1.0, 2.0).lambda_max(), 2.0);
        assert_eq!(scalar(1.0, 0.0).lambda_max(), 0.0);
    }

    #[test]
    fn unregularized_square_design() {
        let pb = random_problem(4, 3, 3, 3, 2);
        // At λ = 0 the gap is ½||R||², so the tolerance bounds the squared residual.
        let opts = SolveOptions {
            tol: 1e-20,
            ..SolveOptions::default()
        };
        let s = solve(&pb, 0.0, &opts).unwrap();
        for i in 0..3 {
            let exact = pb.x()[i].clone().lu().solve(&pb.y()[i]).unwrap();
            assert!((&s.beta[i] - exact).amax() < 1e-6);
        }
    }

    #[test]
    fn zero_groups_stay_zero() {
        let mut pb = random_problem(9, 4, 2, 3, 1);
        for x in &mut pb.x {
            x.column_mut(2).fill(0.0);
        }
        let s = solve(&pb, 0.01 * pb.lambda_max(), &SolveOptions::default()).unwrap();
        assert_eq!(s.group_norms[2], 0.0);
        assert!(!s.support.contains(&2));
    }

    #[test]
    fn non_convergence_reports_gap() {
        let pb = random_problem(1, 5, 2, 3, 1);
        let opts = SolveOptions {
            tol: 1e-14,
            max_sweeps: 1,
            trace: false,
        };
        match solve(&pb, 0.01, &opts) {
            Err(Error::SolverNonConvergence { gap, sweeps: 1 }) => assert!(gap > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn above_lambda_max_is_zero(seed in 0u64..1000) {
            let pb = random_problem(seed, 6, 2, 4, 2);
            let s = solve(&pb, 1.01 * pb.lambda_max(), &SolveOptions::default()).unwrap();
            prop_assert!(s.support.is_empty());
        }

        #[test]
        fn objective_trace_monotone_and_gap_certified(seed in 0u64..1000, frac in 0.01f64..0.9) {
            let pb = random_problem(seed, 5, 3, 4, 2);
            let lambda = frac * pb.lambda_max();
            let opts = SolveOptions { trace: true, ..SolveOptions::default() };
            let s = solve(&pb, lambda, &opts).unwrap();
            for w in s.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
            }
            prop_assert!(s.duality_gap >= 0.0);
            prop_assert!(s.duality_gap <= opts.tol * (1.0 + s.objective.abs()));
            prop_assert!((s.objective - pb.objective(&s.beta, lambda)).abs() <= 1e-10 * (1.0 + s.objective.abs()));
        }

        #[test]
        #[allow(clippy::needless_range_loop)]
        fn kkt_conditions(seed in 0u64..1000, frac in 0.05f64..0.9) {
            let pb = random_problem(seed, 4, 2, 5, 3);
            let lambda = frac * pb.lambda_max();
            let s = solve(&pb, lambda, &SolveOptions { tol: 1e-12, ..SolveOptions::default() }).unwrap();
            let lam = pb.effective_penalty(lambda);
            let r = pb.residuals(&s.beta);
            for j in 0..pb.p() {
                let corr = group_correlation_norm(&pb, j, &r);
                if s.group_norms[j] == 0.0 {
                    prop_assert!(corr <= lam * (1.0 + 1e-6));
                } else {
                    // X_jᵀR = λ β_j / ||β_j||
                    let mut err = 0.0;
                    for i in 0..pb.n() {
                        let g = pb.x()[i].column(j).transpose() * &r[i];
                        let b = s.beta[i].row(j) * (lam / s.group_norms[j]);
                        err += (g - b).norm_squared();
                    }
                    prop_assert!(err.sqrt() <= 1e-4 * (1.0 + lam));
                }
            }
        }

        #[test]
        fn rebasing_preserves_optimum(seed in 0u64..1000) {
            let pb = random_problem(seed, 5, 3, 4, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let gammas: Vec<DMatrix<f64>> = (0..5)
                .map(|_| DMatrix::from_fn(3, 3, |_, _| StandardNormal.sample(&mut rng)).qr().q())
                .collect();
            let lambda = 0.3 * pb.lambda_max();
            let opts = SolveOptions { tol: 1e-12, ..SolveOptions::default() };
            let a = solve(&pb, lambda, &opts).unwrap();
            let b = solve(&pb.rebase(&gammas).unwrap(), lambda, &opts).unwrap();
            prop_assert!((a.objective - b.objective).abs() <= 1e-10 * (1.0 + a.objective.abs()));
            prop_assert_eq!(a.support, b.support);
        }
    }
}
