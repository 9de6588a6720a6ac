//! A nine-atom skeleton (two carbons, one oxygen, six hydrogens) with two
//! freely rotating groups: the methyl hydrogens about the C-C bond and the
//! hydroxyl hydrogen about the C-O bond.
//!
//! Atom order: `C1, C2, O, H1a, H1b, H1c, H2a, H2b, HO`. C1 sits at the
//! origin and C2 on the positive x axis. Bond lengths are 1.52 (C-C),
//! 1.43 (C-O), 1.09 (C-H) and 0.96 (O-H); the C-C-O angle is 109.5°.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dictionary::{Dictionary, Family};
use crate::error::{invalid, Result};
use crate::graph::PointCloud;

pub const SKELETON_ATOMS: usize = 9;

type V3 = [f64; 3];

const DEG: f64 = PI / 180.0;
const CC: f64 = 1.52;
const CO: f64 = 1.43;
const CH: f64 = 1.09;
const OH: f64 = 0.96;
const CCO: f64 = 109.5;
const HCC: f64 = 109.5;
const COH: f64 = 108.5;
/// Half the H-C-H opening of the fixed hydrogens on C2.
const H2_SPREAD: f64 = 54.75;

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(a: V3) -> V3 {
    scale(a, 1.0 / (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt())
}

struct Frame {
    c2: V3,
    o: V3,
    h2: [V3; 2],
    /// Orthonormal frame around the C-O axis.
    axis: V3,
    e1: V3,
    e2: V3,
}

fn rigid_part() -> Frame {
    let c2 = [CC, 0.0, 0.0];
    let bend = (180.0 - CCO) * DEG;
    let o = add(c2, scale([bend.cos(), bend.sin(), 0.0], CO));
    let b1 = unit(sub([0.0; 3], c2));
    let b2 = unit(sub(o, c2));
    let bis = scale(unit(add(b1, b2)), -1.0);
    let normal = unit(cross(b1, b2));
    let t = H2_SPREAD * DEG;
    let h = |sgn: f64| add(c2, scale(add(scale(bis, t.cos()), scale(normal, sgn * t.sin())), CH));
    let axis = b2;
    let e1 = unit(cross(axis, normal));
    let e2 = cross(axis, e1);
    Frame {
        c2,
        o,
        h2: [h(1.0), h(-1.0)],
        axis,
        e1,
        e2,
    }
}

/// Noise-free coordinates for rotation angles `a` (methyl) and `b` (hydroxyl).
pub fn skeleton_configuration(a: f64, b: f64) -> [f64; 3 * SKELETON_ATOMS] {
    let f = rigid_part();
    let mut atoms: [V3; SKELETON_ATOMS] = [[0.0; 3]; SKELETON_ATOMS];
    atoms[1] = f.c2;
    atoms[2] = f.o;
    let (sh, ch) = (HCC * DEG).sin_cos();
    for k in 0..3 {
        let psi = -(a + k as f64 * 2.0 * PI / 3.0);
        atoms[3 + k] = scale([ch, sh * psi.cos(), sh * psi.sin()], CH);
    }
    atoms[6] = f.h2[0];
    atoms[7] = f.h2[1];
    let t = (180.0 - COH) * DEG;
    let around = add(scale(f.e1, b.cos()), scale(f.e2, b.sin()));
    atoms[8] = add(f.o, scale(add(scale(f.axis, t.cos()), scale(around, t.sin())), OH));
    let mut out = [0.0; 3 * SKELETON_ATOMS];
    for (k, p) in atoms.iter().enumerate() {
        out[3 * k..3 * k + 3].copy_from_slice(p);
    }
    out
}

/// Four torsions: the two articulated ones first, then two over rigid atoms.
pub fn skeleton_dictionary() -> Dictionary {
    let mut d = Dictionary::new();
    d.push("torsion H1a-C1-C2-O", Family::Torsion { atoms: [3, 0, 1, 2] })
        .push("torsion C1-C2-O-HO", Family::Torsion { atoms: [0, 1, 2, 8] })
        .push("torsion H2a-C2-C1-O", Family::Torsion { atoms: [6, 1, 0, 2] })
        .push("torsion H2b-C2-O-C1", Family::Torsion { atoms: [7, 1, 2, 0] });
    d
}

#[derive(Debug, Clone)]
pub struct Skeleton {
    pub cloud: PointCloud,
    /// Sampled rotation angles `[a, b]` per configuration.
    pub angles: Vec<[f64; 2]>,
    pub dictionary: Dictionary,
    pub true_support: Vec<usize>,
}

/// Configurations with both angles uniform on `[0, 2π)` and i.i.d.
/// Gaussian noise of variance `noise_sigma2` on every coordinate.
pub fn rigid_skeleton(n: usize, noise_sigma2: f64, seed: u64) -> Result<Skeleton> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(noise_sigma2 >= 0.0 && noise_sigma2.is_finite()) {
        return Err(invalid("noise variance must be finite and nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)])
        .collect();
    let sd = noise_sigma2.sqrt();
    let mut data = Vec::with_capacity(n * 3 * SKELETON_ATOMS);
    for &[a, b] in &angles {
        for v in skeleton_configuration(a, b) {
            data.push(v + sd * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok(Skeleton {
        cloud: PointCloud::new(data, n, 3 * SKELETON_ATOMS)?,
        angles,
        dictionary: skeleton_dictionary(),
        true_support: vec![0, 1],
    })
}
