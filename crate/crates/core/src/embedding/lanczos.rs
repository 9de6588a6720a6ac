//! Thick-restart Lanczos for the largest eigenpairs of a symmetric operator.
//!
//! A single Krylov sequence sees one direction per eigenspace, so converged
//! pairs are locked and the search is repeated on the deflated operator until
//! no missed eigenvalue remains above the current set.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub(crate) struct LanczosOptions {
    pub nev: usize,
    pub max_basis: usize,
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

/// Largest `nev` eigenpairs of the symmetric operator `apply` (`y = A x`),
/// sorted by decreasing eigenvalue. `scale` bounds `||A||` from above.
pub(crate) fn largest_eigenpairs(
    n: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    scale: f64,
    opts: &LanczosOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let nev = opts.nev;
    if nev == 0 || nev > n {
        return Err(Error::InvalidArgument(format!(
            "cannot compute {nev} eigenpairs of a {n}x{n} operator"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    // Shifted operator A + scale I is positive semidefinite, so deflated
    // directions (mapped to zero) never compete with wanted ones.
    let shift = scale;
    let mut vals: Vec<f64> = Vec::new();
    let mut vecs = DMatrix::<f64>::zeros(n, 0);
    loop {
        let k = nev.min(n - vecs.ncols());
        if k == 0 {
            break;
        }
        let locked = vecs.clone();
        let project = |x: &mut DVector<f64>| {
            if locked.ncols() > 0 {
                let c = locked.tr_mul(x);
                *x -= &locked * c;
            }
        };
        let op = |x: &[f64], y: &mut [f64]| {
            let mut xv = DVector::from_column_slice(x);
            project(&mut xv);
            apply(xv.as_slice(), y);
            let mut yv = DVector::from_column_slice(y);
            yv.axpy(shift, &xv, 1.0);
            project(&mut yv);
            y.copy_from_slice(yv.as_slice());
        };
        let (new_vals, new_vecs) = thick_restart(n, n - locked.ncols(), &op, 2.0 * scale, k, opts, &mut rng, &project)?;
        let new_vals: Vec<f64> = new_vals.iter().map(|v| v - shift).collect();
        let floor = if vals.len() >= nev { vals[nev - 1] } else { f64::NEG_INFINITY };
        let gained = new_vals[0] > floor + opts.tol.sqrt() * scale;
        let mut all: Vec<(f64, DVector<f64>)> = vals
            .iter()
            .copied()
            .zip(vecs.column_iter().map(|c| c.clone_owned()))
            .chain(new_vals.iter().copied().zip(new_vecs.column_iter().map(|c| c.clone_owned())))
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0));
        vals = all.iter().map(|a| a.0).collect();
        vecs = DMatrix::from_columns(&all.iter().map(|a| a.1.clone()).collect::<Vec<_>>());
        if vals.len() >= nev && !gained {
            break;
        }
    }
    vals.truncate(nev);
    Ok((vals, vecs.columns(0, nev).clone_owned()))
}

#[allow(clippy::too_many_arguments)]
fn thick_restart(
    n: usize,
    rank: usize,
    apply: &impl Fn(&[f64], &mut [f64]),
    scale: f64,
    nev: usize,
    opts: &LanczosOptions,
    rng: &mut ChaCha8Rng,
    project: &impl Fn(&mut DVector<f64>),
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let kmax = opts.max_basis.max(2 * nev + 8).min(rank);
    let keep = (nev + (kmax - nev) / 2).min(kmax.saturating_sub(1)).max(nev);
    let mut v = DMatrix::<f64>::zeros(n, kmax + 1);
    let mut t = DMatrix::<f64>::zeros(kmax, kmax);
    v.set_column(0, &random_unit(n, rng, project));
    let mut j0 = 0;
    let mut w = vec![0.0; n];
    let mut last_residual = f64::INFINITY;

    for restart in 0..=opts.max_restarts {
        let mut beta_last = 0.0;
        for j in j0..kmax {
            apply(v.column(j).as_slice(), &mut w);
            let mut wv = DVector::from_column_slice(&w);
            let basis = v.columns(0, j + 1);
            let mut h = basis.tr_mul(&wv);
            wv -= basis * &h;
            let h2 = basis.tr_mul(&wv);
            wv -= basis * &h2;
            h += h2;
            for i in 0..=j {
                t[(i, j)] = h[i];
                t[(j, i)] = h[i];
            }
            let mut beta = wv.norm();
            if beta <= 1e-13 * scale {
                beta = 0.0;
                if j + 1 < kmax {
                    // Invariant subspace found: continue from a fresh direction.
                    wv = random_unit(n, rng, project);
                    for _ in 0..2 {
                        let c = basis.tr_mul(&wv);
                        wv -= basis * c;
                    }
                    wv.normalize_mut();
                }
            } else {
                wv /= beta;
            }
            if j + 1 < kmax {
                t[(j, j + 1)] = beta;
                t[(j + 1, j)] = beta;
            }
            v.set_column(j + 1, &wv);
            beta_last = beta;
        }

        let eig = SymmetricEigen::new(t.clone());
        let mut order: Vec<usize> = (0..kmax).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let residual = order[..nev]
            .iter()
            .map(|&k| (beta_last * eig.eigenvectors[(kmax - 1, k)]).abs())
            .fold(0.0, f64::max);
        last_residual = residual;

        let basis = v.columns(0, kmax);
        if residual <= opts.tol * scale || kmax == rank {
            let mut vecs = DMatrix::zeros(n, nev);
            let mut vals = Vec::with_capacity(nev);
            for (c, &k) in order[..nev].iter().enumerate() {
                vals.push(eig.eigenvalues[k]);
                let mut col = basis * eig.eigenvectors.column(k);
                col.normalize_mut();
                vecs.set_column(c, &col);
            }
            log::debug!("Lanczos converged after {restart} restarts, residual {residual:.3e}");
            return Ok((vals, vecs));
        }

        let mut y = DMatrix::zeros(kmax, keep);
        for (c, &k) in order[..keep].iter().enumerate() {
            y.set_column(c, &eig.eigenvectors.column(k));
        }
        let ritz = basis * &y;
        let next = v.column(kmax).clone_owned();
        t.fill(0.0);
        for (c, &k) in order[..keep].iter().enumerate() {
            t[(c, c)] = eig.eigenvalues[k];
            let coupling = beta_last * eig.eigenvectors[(kmax - 1, k)];
            t[(c, keep)] = coupling;
            t[(keep, c)] = coupling;
        }
        v.columns_mut(0, keep).copy_from(&ritz);
        v.set_column(keep, &next);
        j0 = keep;
    }
    Err(Error::EigenNonConvergence {
        residual: last_residual,
        iterations: opts.max_restarts,
    })
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, project: &impl Fn(&mut DVector<f64>)) -> DVector<f64> {
    let mut v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    project(&mut v);
    v.normalize_mut();
    v
}
