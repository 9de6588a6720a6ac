//! Built-in dictionary function families.

use serde::{Deserialize, Serialize};

/// A smooth scalar function on `R^D` with an analytic gradient.
pub trait DictionaryFunction: Send + Sync {
    fn evaluate(&self, x: &[f64]) -> f64;

    /// Writes `∇g(x)` into `out`, which arrives zeroed and has length `D`.
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Largest coordinate index read, used to validate against `D`.
    fn max_index(&self) -> Option<usize>;

    /// True for the identically zero function.
    fn is_zero(&self) -> bool {
        false
    }
}

/// Parametric families with 0-based coordinate or atom indices. Atom `a`
/// occupies coordinates `3a..3a+3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Family {
    /// `ξ_k`
    Coordinate {
        index: usize,
    },
    /// `ξ_a ξ_b`
    Product {
        indices: [usize; 2],
    },
    /// `sin(ξ_a + ξ_b)`
    SinSum {
        indices: [usize; 2],
    },
    /// `ξ_a² + ξ_b²`
    SqSum {
        indices: [usize; 2],
    },
    /// `ξ_k²`
    Square {
        index: usize,
    },
    Zero,
    /// Dihedral angle of four atoms, in `(-π, π]`.
    Torsion {
        atoms: [usize; 4],
    },
    /// Angle at the middle atom, in `[0, π]`.
    PlanarAngle {
        atoms: [usize; 3],
    },
}

impl DictionaryFunction for Family {
    fn evaluate(&self, x: &[f64]) -> f64 {
        match *self {
            Family::Coordinate { index } => x[index],
            Family::Product { indices: [a, b] } => x[a] * x[b],
            Family::SinSum { indices: [a, b] } => (x[a] + x[b]).sin(),
            Family::SqSum { indices: [a, b] } => x[a] * x[a] + x[b] * x[b],
            Family::Square { index } => x[index] * x[index],
            Family::Zero => 0.0,
            Family::Torsion { atoms } => dihedral(x, atoms).0,
            Family::PlanarAngle { atoms } => planar_angle(x, atoms).0,
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            Family::Coordinate { index } => out[index] = 1.0,
            Family::Product { indices: [a, b] } => {
                out[a] += x[b];
                out[b] += x[a];
            }
            Family::SinSum { indices: [a, b] } => {
                let c = (x[a] + x[b]).cos();
                out[a] += c;
                out[b] += c;
            }
            Family::SqSum { indices: [a, b] } => {
                out[a] += 2.0 * x[a];
                out[b] += 2.0 * x[b];
            }
            Family::Square { index } => out[index] = 2.0 * x[index],
            Family::Zero => {}
            Family::Torsion { atoms } => {
                let (_, g) = dihedral(x, atoms);
                scatter(out, &atoms, &g);
            }
            Family::PlanarAngle { atoms } => {
                let (_, g) = planar_angle(x, atoms);
                scatter(out, &atoms, &g);
            }
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            Family::Coordinate { index } | Family::Square { index } => Some(*index),
            Family::Product { indices } | Family::SinSum { indices } | Family::SqSum { indices } => indices.iter().copied().max(),
            Family::Zero => None,
            Family::Torsion { atoms } => atoms.iter().max().map(|a| 3 * a + 2),
            Family::PlanarAngle { atoms } => atoms.iter().max().map(|a| 3 * a + 2),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Family::Zero)
    }
}

type V3 = [f64; 3];

fn atom(x: &[f64], a: usize) -> V3 {
    [x[3 * a], x[3 * a + 1], x[3 * a + 2]]
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

fn scatter<const K: usize>(out: &mut [f64], atoms: &[usize; K], grads: &[V3; K]) {
    for (a, g) in atoms.iter().zip(grads) {
        for c in 0..3 {
            out[3 * a + c] += g[c];
        }
    }
}

/// Dihedral angle of atoms `(a, b, c, d)` about the `b-c` bond and its
/// gradient with respect to each atom.
pub(crate) fn dihedral(x: &[f64], [a, b, c, d]: [usize; 4]) -> (f64, [V3; 4]) {
    let (pa, pb, pc, pd) = (atom(x, a), atom(x, b), atom(x, c), atom(x, d));
    let b1 = sub(pb, pa);
    let b2 = sub(pc, pb);
    let b3 = sub(pd, pc);
    let n1 = cross(b1, b2);
    let n2 = cross(b2, b3);
    let lb2 = norm(b2);
    let phi = (lb2 * dot(b1, n2)).atan2(dot(n1, n2));

    let n1sq = dot(n1, n1);
    let n2sq = dot(n2, n2);
    let ga = scale(n1, -lb2 / n1sq);
    let gd = scale(n2, lb2 / n2sq);
    let p = dot(b1, b2) / (lb2 * lb2);
    let q = dot(b3, b2) / (lb2 * lb2);
    // Translation invariance fixes the middle gradients from the end ones.
    let gb = sub(scale(gd, q), scale(ga, 1.0 + p));
    let gc = sub(scale(ga, p), scale(gd, 1.0 + q));
    (phi, [ga, gb, gc, gd])
}

/// Angle at atom `b` between `b→a` and `b→c`, with gradient.
pub(crate) fn planar_angle(x: &[f64], [a, b, c]: [usize; 3]) -> (f64, [V3; 3]) {
    let u = sub(atom(x, a), atom(x, b));
    let v = sub(atom(x, c), atom(x, b));
    let (lu, lv) = (norm(u), norm(v));
    let theta = norm(cross(u, v)).atan2(dot(u, v));
    let (s, co) = theta.sin_cos();
    let (uh, vh) = (scale(u, 1.0 / lu), scale(v, 1.0 / lv));
    let ga = scale(sub(scale(uh, co), vh), 1.0 / (lu * s));
    let gc = scale(sub(scale(vh, co), uh), 1.0 / (lv * s));
    let gb = scale(add(ga, gc), -1.0);
    (theta, [ga, gb, gc])
}
