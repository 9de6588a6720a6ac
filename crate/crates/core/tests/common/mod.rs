//! Independent reference computations shared by the integration tests.

#![allow(dead_code, clippy::needless_range_loop)]

use manifold_lasso::flasso::LassoProblem;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// `½ Σ_i ||Y_i - X_i B_i||² + λ/sqrt(mn) Σ_j ||B_j||`, written out with
/// explicit loops.
pub fn objective(x: &[DMatrix<f64>], y: &[DMatrix<f64>], beta: &[DMatrix<f64>], lambda: f64) -> f64 {
    let n = x.len();
    let (p, m) = beta[0].shape();
    let mut loss = 0.0;
    for i in 0..n {
        for row in 0..x[i].nrows() {
            for k in 0..m {
                let mut fit = 0.0;
                for j in 0..p {
                    fit += x[i][(row, j)] * beta[i][(j, k)];
                }
                loss += (y[i][(row, k)] - fit).powi(2);
            }
        }
    }
    let mut pen = 0.0;
    for j in 0..p {
        let mut s = 0.0;
        for b in beta {
            for k in 0..m {
                s += b[(j, k)] * b[(j, k)];
            }
        }
        pen += s.sqrt();
    }
    0.5 * loss + lambda / ((m * n) as f64).sqrt() * pen
}

/// Accelerated proximal gradient with a fixed step from the exact Lipschitz
/// constant and adaptive restart.
pub fn proximal_gradient(problem: &LassoProblem, lambda: f64, max_iter: usize) -> Vec<DMatrix<f64>> {
    let x = problem.x();
    let y = problem.y();
    let (n, p, m) = (problem.n(), problem.p(), problem.m());
    let lam = lambda / ((m * n) as f64).sqrt();
    let lip = x
        .iter()
        .map(|xi| {
            let s = xi.singular_values();
            s.max().powi(2)
        })
        .fold(0.0, f64::max)
        .max(1e-300);
    let step = 1.0 / lip;
    let zero = vec![DMatrix::zeros(p, m); n];
    let mut b = zero.clone();
    let mut z = zero;
    let mut t = 1.0f64;
    let mut prev = objective(x, y, &b, lambda);
    for _ in 0..max_iter {
        let mut cand: Vec<DMatrix<f64>> = (0..n)
            .map(|i| {
                let grad = x[i].transpose() * (&x[i] * &z[i] - &y[i]);
                &z[i] - grad * step
            })
            .collect();
        for j in 0..p {
            let norm = cand.iter().map(|c| c.row(j).norm_squared()).sum::<f64>().sqrt();
            let shrink = if norm > lam * step { 1.0 - lam * step / norm } else { 0.0 };
            for c in cand.iter_mut() {
                let mut row = c.row_mut(j);
                row *= shrink;
            }
        }
        let obj = objective(x, y, &cand, lambda);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if obj > prev {
            // restart momentum
            t = 1.0;
            z = b.clone();
            continue;
        }
        let w = (t - 1.0) / t_next;
        z = cand.iter().zip(&b).map(|(c, o)| c + (c - o) * w).collect();
        let done = (prev - obj).abs() <= 1e-16 * (1.0 + obj.abs());
        b = cand;
        prev = obj;
        t = t_next;
        if done {
            break;
        }
    }
    b
}

/// Duality gap at `beta`, computed from scratch.
pub fn duality_gap(problem: &LassoProblem, beta: &[DMatrix<f64>], lambda: f64) -> f64 {
    let (n, m) = (problem.n(), problem.m());
    let lam = lambda / ((m * n) as f64).sqrt();
    let r: Vec<DMatrix<f64>> = (0..n).map(|i| &problem.y()[i] - &problem.x()[i] * &beta[i]).collect();
    let mut worst: f64 = 0.0;
    for j in 0..problem.p() {
        let mut s = 0.0;
        for i in 0..n {
            let c = problem.x()[i].column(j).transpose() * &r[i];
            s += c.norm_squared();
        }
        worst = worst.max(s.sqrt());
    }
    let scale = if worst > lam { lam / worst } else { 1.0 };
    let mut dual = 0.0;
    for i in 0..n {
        dual += scale * problem.y()[i].dot(&r[i]) - 0.5 * scale * scale * r[i].norm_squared();
    }
    objective(problem.x(), problem.y(), beta, lambda) - dual
}

/// Random problem with `n` points, `r` rows, `p` groups and `m` responses.
pub fn random_problem(seed: u64, n: usize, r: usize, p: usize, m: usize) -> LassoProblem {
    let mut g = rng(seed);
    let x = (0..n).map(|_| gaussian(&mut g, r, p)).collect();
    let y = (0..n).map(|_| gaussian(&mut g, r, m)).collect();
    LassoProblem::new(x, y, LassoProblem::default_names(p)).unwrap()
}

fn normalize_columns(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    m
}

/// A recovery instance: support `0..s`, unit-norm columns, off-support
/// columns leaning on the support with weight `leak`, truth `beta` with
/// support groups of norm about `magnitude`, and Gaussian noise of standard
/// deviation `noise`.
pub struct Instance {
    pub problem: LassoProblem,
    pub beta: Vec<DMatrix<f64>>,
    pub support: Vec<usize>,
}

#[allow(clippy::too_many_arguments)]
pub fn recovery_instance(seed: u64, n: usize, r: usize, s: usize, q: usize, m: usize, leak: f64, magnitude: f64, noise: f64) -> Instance {
    let mut g = rng(seed);
    let p = s + q;
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        let basis = gaussian(&mut g, r, r).qr().q();
        let on = normalize_columns(basis.columns(0, s) + gaussian(&mut g, r, s) * 0.2);
        let off_dir = basis.columns(s, r - s) * gaussian(&mut g, r - s, q);
        let off = normalize_columns(normalize_columns(off_dir) + &on * gaussian(&mut g, s, q) * leak);
        let mut xi = DMatrix::zeros(r, p);
        xi.columns_mut(0, s).copy_from(&on);
        xi.columns_mut(s, q).copy_from(&off);
        x.push(xi);
    }
    let mut beta: Vec<DMatrix<f64>> = (0..n)
        .map(|_| {
            let mut b = DMatrix::zeros(p, m);
            b.rows_mut(0, s).copy_from(&gaussian(&mut g, s, m));
            b
        })
        .collect();
    for j in 0..s {
        let norm = beta.iter().map(|b| b.row(j).norm_squared()).sum::<f64>().sqrt();
        for b in beta.iter_mut() {
            let mut row = b.row_mut(j);
            row *= magnitude / norm;
        }
    }
    let y = (0..n).map(|i| &x[i] * &beta[i] + gaussian(&mut g, r, m) * noise).collect();
    Instance {
        problem: LassoProblem::new(x, y, LassoProblem::default_names(p)).unwrap(),
        beta,
        support: (0..s).collect(),
    }
}
