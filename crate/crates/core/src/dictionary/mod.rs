//! Dictionaries of smooth functions: gradients, normalization and projection
//! onto tangent frames.

mod families;

pub use families::{DictionaryFunction, Family};

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{try_map_range, Parallelism};
use crate::graph::PointCloud;
use crate::tangent::TangentFrames;

/// One line of a dictionary config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrySpec {
    pub name: String,
    #[serde(flatten)]
    pub family: Family,
    /// Constant multiplier applied to the function.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

struct Entry {
    name: String,
    func: Arc<dyn DictionaryFunction>,
    scale: f64,
    spec: Option<EntrySpec>,
}

impl Clone for Entry {
    fn clone(&self) -> Self {
        Entry {
            name: self.name.clone(),
            func: Arc::clone(&self.func),
            scale: self.scale,
            spec: self.spec.clone(),
        }
    }
}

struct Callback<E, G> {
    eval: E,
    grad: G,
    max_index: Option<usize>,
}

impl<E, G> DictionaryFunction for Callback<E, G>
where
    E: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn evaluate(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.grad)(x, out)
    }

    fn max_index(&self) -> Option<usize> {
        self.max_index
    }
}

/// Ordered list of `p` functions `g_1 … g_p`.
#[derive(Clone, Default)]
pub struct Dictionary {
    entries: Vec<Entry>,
}

impl std::fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

impl Dictionary {
    pub fn new() -> Self {
        Dictionary::default()
    }

    pub fn from_specs(specs: Vec<EntrySpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(invalid("dictionary must contain at least one function"));
        }
        let mut d = Dictionary::new();
        for s in specs {
            if !(s.scale.is_finite() && s.scale != 0.0) {
                return Err(invalid(format!("dictionary entry {}: scale must be finite and nonzero", s.name)));
            }
            d.entries.push(Entry {
                name: s.name.clone(),
                func: Arc::new(s.family.clone()),
                scale: s.scale,
                spec: Some(s),
            });
        }
        Ok(d)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Dictionary::from_specs(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Dictionary::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Parse {
                path: path.to_path_buf(),
                line: j.line() as u64,
                message: j.to_string(),
            },
            e => e,
        })
    }

    /// Config entries, when every function is a built-in family.
    pub fn specs(&self) -> Option<Vec<EntrySpec>> {
        self.entries.iter().map(|e| e.spec.clone()).collect()
    }

    pub fn push(&mut self, name: impl Into<String>, family: Family) -> &mut Self {
        let name = name.into();
        self.entries.push(Entry {
            name: name.clone(),
            func: Arc::new(family.clone()),
            scale: 1.0,
            spec: Some(EntrySpec { name, family, scale: 1.0 }),
        });
        self
    }

    /// Adds a function given by closures. `max_index` is the largest
    /// coordinate the function reads, if known.
    pub fn push_callback<E, G>(&mut self, name: impl Into<String>, eval: E, grad: G, max_index: Option<usize>) -> &mut Self
    where
        E: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.entries.push(Entry {
            name: name.into(),
            func: Arc::new(Callback { eval, grad, max_index }),
            scale: 1.0,
            spec: None,
        });
        self
    }

    /// Returns a copy with function `j` multiplied by `c`.
    pub fn scaled(&self, j: usize, c: f64) -> Dictionary {
        let mut out = self.clone();
        out.entries[j].scale *= c;
        if let Some(s) = &mut out.entries[j].spec {
            s.scale *= c;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn is_zero(&self, j: usize) -> bool {
        self.entries[j].func.is_zero()
    }

    pub fn evaluate(&self, j: usize, x: &[f64]) -> f64 {
        self.entries[j].scale * self.entries[j].func.evaluate(x)
    }

    /// Checks that every function only reads coordinates below `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.is_empty() {
            return Err(invalid("dictionary must contain at least one function"));
        }
        for e in &self.entries {
            if let Some(k) = e.func.max_index() {
                if k >= dim {
                    return Err(invalid(format!(
                        "dictionary entry {} reads coordinate {k} but the data has dimension {dim}",
                        e.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// `∇g_j(ξ)` for every `j`, as the columns of a `D x p` matrix.
    pub fn gradients_at(&self, x: &[f64], point: usize) -> Result<DMatrix<f64>> {
        let dim = x.len();
        let mut out = DMatrix::zeros(dim, self.len());
        let mut buf = vec![0.0; dim];
        for (j, e) in self.entries.iter().enumerate() {
            buf.iter_mut().for_each(|v| *v = 0.0);
            e.func.gradient(x, &mut buf);
            if buf.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { point, function: j });
            }
            for (r, v) in buf.iter().enumerate() {
                out[(r, j)] = e.scale * v;
            }
        }
        Ok(out)
    }
}

/// Ambient gradients `∇_ξ g_j(ξ_i)` (`D x p` per point) at selected points.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub points: Vec<usize>,
    pub gradients: Vec<DMatrix<f64>>,
}

impl GradientBundle {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Evaluates all dictionary gradients at the listed points.
pub fn eval_gradients(dict: &Dictionary, cloud: &PointCloud, points: &[usize], mode: Parallelism) -> Result<GradientBundle> {
    dict.validate(cloud.dim())?;
    if let Some(&i) = points.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: cloud.len(),
        });
    }
    let gradients = try_map_range(points.len(), mode, |k| dict.gradients_at(cloud.point(points[k]), points[k]))?;
    Ok(GradientBundle {
        points: points.to_vec(),
        gradients,
    })
}

/// Which norm defines `γ_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `γ_j² = (1/n) Σ ||∇_ξ g_j(ξ_i)||²`.
    #[default]
    Ambient,
    /// `γ_j² = (1/n) Σ ||T_iᵀ ∇_ξ g_j(ξ_i)||²`.
    Tangent,
}

/// Global normalizers `γ_j` over the bundle's points. Identically zero
/// functions get `γ = 1`; any other function with `γ = 0` is an error.
pub fn normalizers(dict: &Dictionary, bundle: &GradientBundle, frames: Option<&TangentFrames>) -> Result<Vec<f64>> {
    let p = dict.len();
    let n = bundle.len();
    if n == 0 {
        return Err(invalid("cannot normalize over an empty set of points"));
    }
    let mut sums = vec![0.0; p];
    for (k, g) in bundle.gradients.iter().enumerate() {
        let projected;
        let m = match frames {
            Some(f) => {
                let t = f
                    .basis(bundle.points[k])
                    .ok_or_else(|| invalid(format!("point {} has no tangent frame", bundle.points[k])))?;
                projected = t.transpose() * g;
                &projected
            }
            None => g,
        };
        for (j, s) in sums.iter_mut().enumerate() {
            *s += m.column(j).norm_squared();
        }
    }
    sums.iter()
        .enumerate()
        .map(|(j, s)| {
            if dict.is_zero(j) {
                return Ok(1.0);
            }
            let gamma = (s / n as f64).sqrt();
            if gamma > 0.0 {
                Ok(gamma)
            } else {
                Err(Error::ZeroNormalizer {
                    index: j,
                    name: dict.names()[j].clone(),
                })
            }
        })
        .collect()
}

/// `X_i = T_iᵀ [∇g_j(ξ_i) / γ_j]_j` (`d x p`) for every bundle point.
pub fn project_gradients(bundle: &GradientBundle, frames: &TangentFrames, gamma: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    bundle
        .points
        .iter()
        .zip(&bundle.gradients)
        .map(|(&i, g)| {
            let t = frames.basis(i).ok_or_else(|| invalid(format!("point {i} has no tangent frame")))?;
            Ok(divide_columns(t.transpose() * g, gamma))
        })
        .collect()
}

pub(crate) fn divide_columns(mut m: DMatrix<f64>, gamma: &[f64]) -> DMatrix<f64> {
    for (j, g) in gamma.iter().enumerate() {
        m.column_mut(j).unscale_mut(*g);
    }
    m
}

/// Per-point unit normalization `x_ij = ∇g_j(ξ_i) / ||∇g_j(ξ_i)||`; zero
/// gradients stay zero.
pub fn unit_normalize(g: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = g.clone();
    for mut col in out.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col.unscale_mut(n);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tangent::Frame;

    fn frames_from(bases: Vec<DMatrix<f64>>) -> TangentFrames {
        let d = bases[0].ncols();
        TangentFrames::new(
            d,
            bases
                .into_iter()
                .map(|basis| {
                    Some(Frame {
                        spectrum: vec![1.0; basis.ncols()],
                        basis,
                    })
                })
                .collect(),
        )
    }

    #[test]
    fn parses_config() {
        let text = r#"[
            {"name": "x1", "family": "coordinate", "params": {"index": 0}},
            {"name": "zero", "family": "zero"},
            {"name": "tA", "family": "torsion", "params": {"atoms": [3, 0, 1, 2]}, "scale": 2.0}
        ]"#;
        let d = Dictionary::from_json(text).unwrap();
        assert_eq!(d.names(), vec!["x1", "zero", "tA"]);
        assert!(d.is_zero(1));
        let specs = d.specs().unwrap();
        assert_eq!(specs[2].scale, 2.0);
        let back = serde_json::to_string(&specs).unwrap();
        assert_eq!(Dictionary::from_json(&back).unwrap().specs().unwrap(), specs);
        assert!(Dictionary::from_json(r#"[{"name": "q", "family": "cubic"}]"#).is_err());
        assert!(Dictionary::from_json("[]").is_err());
    }

    #[test]
    fn coordinate_gradient_everywhere() {
        let mut d = Dictionary::new();
        d.push("x1", Family::Coordinate { index: 0 });
        let c = PointCloud::from_rows(&[vec![0.3, 2.0, 5.0], vec![-1.0, 0.0, 1.0]]).unwrap();
        let b = eval_gradients(&d, &c, &[0, 1], Parallelism::Sequential).unwrap();
        for g in &b.gradients {
            assert_eq!(g.as_slice(), &[1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn out_of_range_index_rejected() {
        let mut d = Dictionary::new();
        d.push("x9", Family::Coordinate { index: 9 });
        let c = PointCloud::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(eval_gradients(&d, &c, &[0], Parallelism::Sequential).is_err());
    }

    #[test]
    fn non_finite_gradient_names_point_and_function() {
        let mut d = Dictionary::new();
        d.push("x1", Family::Coordinate { index: 0 });
        d.push_callback("sqrt", |x| x[0].sqrt(), |x, g| g[0] = 0.5 / x[0].sqrt(), Some(0));
        let c = PointCloud::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let err = eval_gradients(&d, &c, &[0, 1], Parallelism::Sequential).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { point: 1, function: 1 }));
    }

    #[test]
    fn tangent_normalization_hand_projection() {
        let mut d = Dictionary::new();
        d.push("x1", Family::Coordinate { index: 0 });
        let c = PointCloud::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let b = eval_gradients(&d, &c, &[0, 1, 2], Parallelism::Sequential).unwrap();
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(normalizers(&d, &b, Some(&frames_from(vec![e1; 3]))).unwrap(), vec![1.0]);
        assert!(matches!(
            normalizers(&d, &b, Some(&frames_from(vec![e2; 3]))),
            Err(Error::ZeroNormalizer { index: 0, .. })
        ));
    }

    #[test]
    fn rescaling_leaves_normalized_problem_unchanged() {
        let mut d = Dictionary::new();
        d.push("p", Family::Product { indices: [0, 1] });
        d.push("s", Family::SinSum { indices: [1, 2] });
        d.push("z", Family::Zero);
        let c = PointCloud::from_rows(&[vec![0.3, 2.0, 5.0], vec![-1.0, 0.5, 1.0], vec![0.1, 0.2, 0.3]]).unwrap();
        let pts = [0, 1, 2];
        let base = eval_gradients(&d, &c, &pts, Parallelism::Sequential).unwrap();
        let gamma = normalizers(&d, &base, None).unwrap();
        assert_eq!(gamma[2], 1.0);
        for c_scale in [8.0, 0.25, 10.0] {
            let ds = d.scaled(0, c_scale);
            let b = eval_gradients(&ds, &c, &pts, Parallelism::Sequential).unwrap();
            let gs = normalizers(&ds, &b, None).unwrap();
            for (x, y) in base.gradients.iter().zip(&b.gradients) {
                let a = divide_columns(x.clone(), &gamma);
                let s = divide_columns(y.clone(), &gs);
                if c_scale == 10.0 {
                    assert!((a - s).amax() < 1e-15);
                } else {
                    assert_eq!(a, s);
                }
            }
        }
    }

    #[test]
    fn projection_by_hand() {
        let t = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let bundle = GradientBundle {
            points: vec![0],
            gradients: vec![DMatrix::from_column_slice(3, 2, &[3.0, 4.0, 5.0, 0.0, 0.0, 7.0])],
        };
        let x = project_gradients(&bundle, &frames_from(vec![t]), &[1.0, 1.0]).unwrap();
        assert_eq!(x[0].as_slice(), &[3.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_columns() {
        let g = DMatrix::from_column_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]);
        let x = unit_normalize(&g);
        assert!((x.column(0).norm() - 1.0).abs() < 1e-12);
        assert_eq!(x.column(1).norm(), 0.0);
    }
}
