use nalgebra::DMatrix;
use serde::Serialize;

use super::{solve_from, LassoProblem, LassoSolution, SolveOptions};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PathOptions {
    /// Number of geometrically spaced penalties.
    pub points: usize,
    /// Smallest penalty as a fraction of `λ_max`.
    pub min_ratio: f64,
    pub solve: SolveOptions,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            points: 50,
            min_ratio: 1e-3,
            solve: SolveOptions::default(),
        }
    }
}

/// `count` penalties from `max` down to `min_ratio * max`, geometrically spaced.
pub fn geometric_grid(max: f64, min_ratio: f64, count: usize) -> Result<Vec<f64>> {
    if !(max > 0.0) || !(min_ratio > 0.0 && min_ratio < 1.0) || count == 0 {
        return Err(invalid(format!("invalid grid: max {max}, ratio {min_ratio}, {count} points")));
    }
    if count == 1 {
        return Ok(vec![max]);
    }
    let step = min_ratio.ln() / (count - 1) as f64;
    Ok((0..count).map(|k| max * (step * k as f64).exp()).collect())
}

/// Solutions along strictly decreasing `lambdas`, each warm-started from the
/// previous one.
pub fn regularization_path(problem: &LassoProblem, lambdas: &[f64], opts: &SolveOptions) -> Result<Vec<LassoSolution>> {
    if lambdas.is_empty() {
        return Err(invalid("empty penalty grid"));
    }
    if lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("penalties must be positive and strictly decreasing"));
    }
    let mut out: Vec<LassoSolution> = Vec::with_capacity(lambdas.len());
    let mut warm: Option<Vec<DMatrix<f64>>> = None;
    for &lambda in lambdas {
        let s = solve_from(problem, lambda, warm.as_deref(), opts)?;
        warm = Some(s.beta.clone());
        out.push(s);
    }
    Ok(out)
}

/// The penalty chosen on a path and its support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub index: usize,
    pub lambda: f64,
    pub support: Vec<usize>,
    /// True when the support size equals the target exactly.
    pub exact: bool,
}

/// Picks the largest penalty whose support has exactly `target` groups, or
/// failing that the largest penalty whose support has more.
pub fn select_support(path: &[LassoSolution], target: usize) -> Result<Selection> {
    if path.is_empty() {
        return Err(invalid("empty regularization path"));
    }
    let mut order: Vec<usize> = (0..path.len()).collect();
    order.sort_by(|&a, &b| path[b].lambda.total_cmp(&path[a].lambda));
    let pick = |exact: bool| {
        order.iter().copied().find(|&k| {
            let s = path[k].support.len();
            if exact {
                s == target
            } else {
                s >= target
            }
        })
    };
    let (index, exact) = match pick(true) {
        Some(k) => (k, true),
        None => match pick(false) {
            Some(k) => (k, false),
            None => {
                let summary = order
                    .iter()
                    .map(|&k| format!("{:.3e}:{}", path[k].lambda, path[k].support.len()))
                    .collect::<Vec<_>>()
                    .join(", ");
                return Err(Error::InconclusiveSelection { target, summary });
            }
        },
    };
    Ok(Selection {
        index,
        lambda: path[index].lambda,
        support: path[index].support.clone(),
        exact,
    })
}
