//! Simple manifolds with analytic tangent spaces and embeddings.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::graph::PointCloud;

fn random_orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

#[derive(Debug, Clone)]
pub struct Circle {
    pub cloud: PointCloud,
    pub angles: Vec<f64>,
    /// `D x 2` isometry from the plane of the circle into `R^D`.
    pub lift: DMatrix<f64>,
}

impl Circle {
    /// Unit tangent `(-sin θ, cos θ)` mapped into `R^D`.
    pub fn tangent(&self, i: usize) -> Vec<f64> {
        let (s, c) = self.angles[i].sin_cos();
        (&self.lift * nalgebra::DVector::from_vec(vec![-s, c])).as_slice().to_vec()
    }
}

/// Unit circle, at equally spaced angles or uniform random ones, lifted to
/// `R^dim` by a random isometry when `dim > 2`, with optional isotropic
/// noise of standard deviation `noise`.
pub fn circle(n: usize, dim: usize, equally_spaced: bool, noise: f64, seed: u64) -> Result<Circle> {
    if n == 0 || dim < 2 {
        return Err(invalid("circle needs n >= 1 and dim >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<f64> = if equally_spaced {
        (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect()
    } else {
        (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect()
    };
    let lift = if dim == 2 {
        DMatrix::identity(2, 2)
    } else {
        random_orthonormal(&mut rng, dim, 2)
    };
    let mut data = Vec::with_capacity(n * dim);
    for &t in &angles {
        let (s, c) = t.sin_cos();
        for r in 0..dim {
            data.push(lift[(r, 0)] * c + lift[(r, 1)] * s + noise * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok(Circle {
        cloud: PointCloud::new(data, n, dim)?,
        angles,
        lift,
    })
}

#[derive(Debug, Clone)]
pub struct Plane {
    pub cloud: PointCloud,
    /// Coordinates in `[0, 1]^d` before mapping.
    pub coords: Vec<Vec<f64>>,
    /// `D x d` orthonormal basis of the plane.
    pub basis: DMatrix<f64>,
}

/// Uniform samples of the unit cube in a random `d`-plane of `R^dim`, with
/// optional isotropic noise of standard deviation `noise`.
pub fn plane(n: usize, d: usize, dim: usize, noise: f64, seed: u64) -> Result<Plane> {
    if n == 0 || d == 0 || d > dim {
        return Err(invalid(format!("plane needs n >= 1 and 1 <= d <= D, got d = {d}, D = {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = random_orthonormal(&mut rng, dim, d);
    let coords: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let mut data = Vec::with_capacity(n * dim);
    for t in &coords {
        for r in 0..dim {
            let v: f64 = (0..d).map(|k| basis[(r, k)] * t[k]).sum();
            data.push(v + noise * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok(Plane {
        cloud: PointCloud::new(data, n, dim)?,
        coords,
        basis,
    })
}

/// A plane sample together with an isometric linear embedding of it.
#[derive(Debug, Clone)]
pub struct LinearIsometry {
    pub plane: Plane,
    /// `n x m` embedding coordinates `φ_i = V t_i`.
    pub embedding: DMatrix<f64>,
    /// `m x d` orthonormal map `V`.
    pub map: DMatrix<f64>,
}

pub fn linear_isometry(n: usize, d: usize, dim: usize, m: usize, seed: u64) -> Result<LinearIsometry> {
    if m < d {
        return Err(invalid(format!("embedding dimension {m} is below intrinsic dimension {d}")));
    }
    let plane = plane(n, d, dim, 0.0, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let map = random_orthonormal(&mut rng, m, d);
    let embedding = DMatrix::from_fn(n, m, |i, k| (0..d).map(|c| map[(k, c)] * plane.coords[i][c]).sum());
    Ok(LinearIsometry { plane, embedding, map })
}
