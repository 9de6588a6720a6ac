//! Seeded synthetic datasets with known functional support.

mod manifolds;
mod skeleton;

pub use manifolds::{circle, linear_isometry, plane, Circle, LinearIsometry, Plane};
pub use skeleton::{rigid_skeleton, skeleton_configuration, skeleton_dictionary, Skeleton, SKELETON_ATOMS};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dictionary::{unit_normalize, Dictionary, Family};
use crate::error::{invalid, Result};
use crate::flasso::LassoProblem;
use crate::graph::PointCloud;

/// Variance of each coordinate of `ξ` in the flat examples.
pub const FLAT_VARIANCE: f64 = 0.2;

/// Generator selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Example1G1,
    Example1G2,
    Example2,
    RigidSkeletonTorus,
    Circle,
    FlatPlane,
    LinearIsometry,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 7] = [
        SyntheticKind::Example1G1,
        SyntheticKind::Example1G2,
        SyntheticKind::Example2,
        SyntheticKind::RigidSkeletonTorus,
        SyntheticKind::Circle,
        SyntheticKind::FlatPlane,
        SyntheticKind::LinearIsometry,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Example1G1 => "example1_g1",
            SyntheticKind::Example1G2 => "example1_g2",
            SyntheticKind::Example2 => "example2",
            SyntheticKind::RigidSkeletonTorus => "rigid_skeleton_torus",
            SyntheticKind::Circle => "circle",
            SyntheticKind::FlatPlane => "flat_plane",
            SyntheticKind::LinearIsometry => "linear_isometry",
        }
    }
}

impl std::str::FromStr for SyntheticKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        SyntheticKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown synthetic kind {s:?}")))
    }
}

/// Generator request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    #[serde(default)]
    pub noise_sigma2: f64,
    /// Ambient dimension where the kind allows a choice.
    #[serde(default)]
    pub ambient_dim: Option<usize>,
    /// Intrinsic dimension where the kind allows a choice.
    #[serde(default)]
    pub intrinsic_dim: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

/// Everything a generator can produce.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub cloud: PointCloud,
    pub dictionary: Option<Dictionary>,
    /// Flat problem built from the analytic gradients, for the examples.
    pub problem: Option<LassoProblem>,
    pub true_support: Vec<usize>,
    /// Generating parameters per point (angles or plane coordinates).
    pub latent: Vec<Vec<f64>>,
    /// Externally supplied embedding for the isometry kind.
    pub embedding: Option<DMatrix<f64>>,
}

pub fn generate(spec: &SyntheticSpec) -> Result<Synthetic> {
    if spec.n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(spec.noise_sigma2 >= 0.0 && spec.noise_sigma2.is_finite()) {
        return Err(invalid("noise variance must be finite and nonnegative"));
    }
    let flat = |ex: FlatExample| Synthetic {
        cloud: ex.cloud,
        dictionary: Some(ex.dictionary),
        problem: Some(ex.problem),
        true_support: ex.true_support,
        latent: Vec::new(),
        embedding: None,
    };
    Ok(match spec.kind {
        SyntheticKind::Example1G1 => flat(example1(spec.n, Example1Dictionary::G1, spec.noise_sigma2, spec.seed)?),
        SyntheticKind::Example1G2 => flat(example1(spec.n, Example1Dictionary::G2, spec.noise_sigma2, spec.seed)?),
        SyntheticKind::Example2 => flat(example2(spec.n, spec.ambient_dim.unwrap_or(8), spec.noise_sigma2, spec.seed)?),
        SyntheticKind::RigidSkeletonTorus => {
            let s = rigid_skeleton(spec.n, spec.noise_sigma2, spec.seed)?;
            Synthetic {
                cloud: s.cloud,
                dictionary: Some(s.dictionary),
                problem: None,
                true_support: s.true_support,
                latent: s.angles.iter().map(|a| a.to_vec()).collect(),
                embedding: None,
            }
        }
        SyntheticKind::Circle => {
            let c = circle(spec.n, spec.ambient_dim.unwrap_or(2), false, spec.noise_sigma2.sqrt(), spec.seed)?;
            Synthetic {
                cloud: c.cloud,
                dictionary: None,
                problem: None,
                true_support: Vec::new(),
                latent: c.angles.iter().map(|&a| vec![a]).collect(),
                embedding: None,
            }
        }
        SyntheticKind::FlatPlane => {
            let d = spec.intrinsic_dim.unwrap_or(2);
            let p = plane(spec.n, d, spec.ambient_dim.unwrap_or(d + 1), spec.noise_sigma2.sqrt(), spec.seed)?;
            Synthetic {
                cloud: p.cloud,
                dictionary: None,
                problem: None,
                true_support: Vec::new(),
                latent: p.coords,
                embedding: None,
            }
        }
        SyntheticKind::LinearIsometry => {
            let d = spec.intrinsic_dim.unwrap_or(2);
            let iso = linear_isometry(spec.n, d, spec.ambient_dim.unwrap_or(d + 2), d + 1, spec.seed)?;
            Synthetic {
                cloud: iso.plane.cloud,
                dictionary: None,
                problem: None,
                true_support: Vec::new(),
                latent: iso.plane.coords,
                embedding: Some(iso.embedding),
            }
        }
    })
}

/// A flat problem: samples, dictionary, design built from analytic
/// gradients, and the true support (0-based).
#[derive(Debug, Clone)]
pub struct FlatExample {
    pub cloud: PointCloud,
    pub dictionary: Dictionary,
    pub problem: LassoProblem,
    pub true_support: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example1Dictionary {
    /// `{ξ1, ξ2, ξ3, ξ4}`
    G1,
    /// `{ξ1, ξ2, ξ1ξ2, 0}`
    G2,
}

pub fn example1_dictionary(variant: Example1Dictionary) -> Dictionary {
    let mut d = Dictionary::new();
    match variant {
        Example1Dictionary::G1 => {
            for k in 0..4 {
                d.push(format!("x{}", k + 1), Family::Coordinate { index: k });
            }
        }
        Example1Dictionary::G2 => {
            d.push("x1", Family::Coordinate { index: 0 })
                .push("x2", Family::Coordinate { index: 1 })
                .push("x1*x2", Family::Product { indices: [0, 1] })
                .push("zero", Family::Zero);
        }
    }
    d
}

/// `∇(ξ1 ξ2) = (ξ2, ξ1, 0, 0)`.
pub fn example1_gradient(x: &[f64]) -> Vec<f64> {
    vec![x[1], x[0], 0.0, 0.0]
}

/// Target `ξ1 ξ2` in `R^4`; true support `{0, 1}` for `G1` and `{2}` for `G2`.
pub fn example1(n: usize, variant: Example1Dictionary, noise_sigma2: f64, seed: u64) -> Result<FlatExample> {
    let dictionary = example1_dictionary(variant);
    let true_support = match variant {
        Example1Dictionary::G1 => vec![0, 1],
        Example1Dictionary::G2 => vec![2],
    };
    flat_example(n, 4, dictionary, true_support, noise_sigma2, seed, example1_gradient)
}

/// `sin(ξ_k + ξ_{k+1})` for `k < D-1`, then `ξ_k² + ξ_{k+2}²` for `k < D-2`.
pub fn example2_dictionary(dim: usize) -> Dictionary {
    let mut d = Dictionary::new();
    for k in 0..dim - 1 {
        d.push(format!("sin(x{}+x{})", k + 1, k + 2), Family::SinSum { indices: [k, k + 1] });
    }
    for k in 0..dim - 2 {
        d.push(format!("x{}^2+x{}^2", k + 1, k + 3), Family::SqSum { indices: [k, k + 2] });
    }
    d
}

/// Gradient of `sin(ξ1 + ξ2)(ξ3² + ξ5²)`.
pub fn example2_gradient(x: &[f64]) -> Vec<f64> {
    let (s, c) = (x[0] + x[1]).sin_cos();
    let q = x[2] * x[2] + x[4] * x[4];
    let mut g = vec![0.0; x.len()];
    g[0] = c * q;
    g[1] = c * q;
    g[2] = 2.0 * x[2] * s;
    g[4] = 2.0 * x[4] * s;
    g
}

/// Target `sin(ξ1 + ξ2)(ξ3² + ξ5²)` in `R^dim`; true support `{0, dim + 1}`.
pub fn example2(n: usize, dim: usize, noise_sigma2: f64, seed: u64) -> Result<FlatExample> {
    if dim < 5 {
        return Err(invalid(format!("dimension must be at least 5, got {dim}")));
    }
    flat_example(
        n,
        dim,
        example2_dictionary(dim),
        vec![0, dim + 1],
        noise_sigma2,
        seed,
        example2_gradient,
    )
}

/// Samples `ξ ~ N(0, 0.2 I)`, adds i.i.d. `N(0, σ²)` noise to the target
/// gradient and to every nonzero dictionary gradient, then normalizes each
/// design column to unit length per point.
fn flat_example(
    n: usize,
    dim: usize,
    dictionary: Dictionary,
    true_support: Vec<usize>,
    noise_sigma2: f64,
    seed: u64,
    target: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<FlatExample> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(noise_sigma2 >= 0.0 && noise_sigma2.is_finite()) {
        return Err(invalid("noise variance must be finite and nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = Normal::new(0.0, FLAT_VARIANCE.sqrt()).expect("valid normal");
    let data: Vec<f64> = (0..n * dim).map(|_| sampler.sample(&mut rng)).collect();
    let cloud = PointCloud::new(data, n, dim)?;
    let noise = noise_sigma2.sqrt();
    let p = dictionary.len();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let mut g = dictionary.gradients_at(cloud.point(i), i)?;
        let mut y = DMatrix::from_vec(dim, 1, target(cloud.point(i)));
        if noise > 0.0 {
            for j in (0..p).filter(|&j| !dictionary.is_zero(j)) {
                for v in g.column_mut(j).iter_mut() {
                    *v += noise * rng.sample::<f64, _>(StandardNormal);
                }
            }
            for v in y.iter_mut() {
                *v += noise * rng.sample::<f64, _>(StandardNormal);
            }
        }
        xs.push(unit_normalize(&g));
        ys.push(y);
    }
    let problem = LassoProblem::new(xs, ys, dictionary.names())?;
    Ok(FlatExample {
        cloud,
        dictionary,
        problem,
        true_support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_check(f: impl Fn(&[f64]) -> f64, grad: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) {
        let g = grad(x);
        let h = 1e-6;
        for k in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-6 * (1.0 + g[k].abs()), "coordinate {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn example1_gradient_hand_value() {
        assert_eq!(example1_gradient(&[1.0, 2.0, 5.0, 7.0]), vec![2.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn example2_gradient_vanishes_at_origin() {
        assert!(example2_gradient(&[0.0; 8]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn target_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..8).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            fd_check(|x| x[0] * x[1], example1_gradient, &x[..4]);
            fd_check(|x| (x[0] + x[1]).sin() * (x[2] * x[2] + x[4] * x[4]), example2_gradient, &x);
        }
    }

    #[test]
    fn example2_true_support_names() {
        let d = example2_dictionary(8);
        assert_eq!(d.len(), 13);
        assert_eq!(d.names()[0], "sin(x1+x2)");
        assert_eq!(d.names()[9], "x3^2+x5^2");
        assert_eq!(example2_dictionary(20).len(), 37);
    }

    #[test]
    fn g2_zero_column_stays_zero_under_noise() {
        let ex = example1(20, Example1Dictionary::G2, 0.01, 1).unwrap();
        assert!(ex.problem.x().iter().all(|x| x.column(3).iter().all(|&v| v == 0.0)));
        assert!(ex.problem.x().iter().all(|x| (x.column(0).norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn noiseless_product_column_is_parallel_to_target() {
        let ex = example1(10, Example1Dictionary::G2, 0.0, 4).unwrap();
        for (x, y) in ex.problem.x().iter().zip(ex.problem.y()) {
            let c = x.column(2);
            assert_relative_eq!(c.dot(&y.column(0)).abs(), y.norm(), max_relative = 1e-12);
        }
    }

    #[test]
    fn generators_are_reproducible() {
        for kind in SyntheticKind::ALL {
            let spec = SyntheticSpec {
                kind,
                n: 12,
                noise_sigma2: 0.01,
                ambient_dim: None,
                intrinsic_dim: None,
                seed: 9,
            };
            let a = generate(&spec).unwrap();
            let b = generate(&spec).unwrap();
            assert_eq!(a.cloud, b.cloud, "{}", kind.name());
            assert_eq!(a.problem.map(|p| p.y().to_vec()), b.problem.map(|p| p.y().to_vec()));
            assert_eq!(kind.name().parse::<SyntheticKind>().unwrap(), kind);
        }
    }
}
