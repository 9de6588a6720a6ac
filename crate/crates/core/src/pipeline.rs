//! End-to-end runs: graph, Laplacian, embedding, tangent frames, dictionary
//! gradients, pull-back and the regularization path, either in one call or
//! stage by stage through files.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{check_recovery_conditions, RecoveryCertificate};
use crate::dictionary::{eval_gradients, normalizers, project_gradients, unit_normalize, Dictionary, Normalization};
use crate::embedding::{spectral_embed, EigenSolver, Embedding, EmbeddingParams, EmbeddingSource};
use crate::error::{invalid, Error, Result};
use crate::exec::Parallelism;
use crate::flasso::{
    geometric_grid, regularization_path, select_support, LassoProblem, LassoSolution, Selection, SolveOptions, MAX_SWEEPS,
};
use crate::graph::{GraphParams, KernelExponent, Laplacian, NeighborGraph, NeighborSearch, PointCloud};
use crate::io;
use crate::pullback::pullback_gradients;
use crate::tangent::{estimate_frames_at, TangentFrames};

/// Everything a run needs. Paths are only used by the file-based entry
/// points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub cloud: Option<PathBuf>,
    /// Skip one header row when reading a CSV cloud.
    pub skip_header: bool,
    /// Precomputed embedding (CSV, `n x m`); replaces the spectral step.
    pub embedding: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub bandwidth: f64,
    /// Defaults to three bandwidths.
    pub radius: Option<f64>,
    pub kernel_exponent: u32,
    pub intrinsic_dim: usize,
    pub embedding_dim: usize,
    pub solver: EigenSolver,
    /// Solve at this single penalty instead of a path.
    pub lambda: Option<f64>,
    /// Explicit strictly decreasing penalties.
    pub lambda_grid: Option<Vec<f64>>,
    pub path_points: usize,
    pub min_ratio: f64,
    pub normalization: Normalization,
    /// Explicit gradient points `I`.
    pub subsample: Option<Vec<usize>>,
    /// Random subsample size; one subsample per entry of `seeds`.
    pub subsample_size: Option<usize>,
    pub seeds: Vec<u64>,
    pub seed: u64,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Drop points with degenerate neighborhoods instead of failing.
    pub skip_degenerate: bool,
    /// Support size the cardinality rule aims for; defaults to `intrinsic_dim`.
    pub target_support: Option<usize>,
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cloud: None,
            skip_header: false,
            embedding: None,
            dictionary: None,
            output: None,
            bandwidth: 0.0,
            radius: None,
            kernel_exponent: 2,
            intrinsic_dim: 1,
            embedding_dim: 2,
            solver: EigenSolver::Auto,
            lambda: None,
            lambda_grid: None,
            path_points: 50,
            min_ratio: 1e-3,
            normalization: Normalization::Ambient,
            subsample: None,
            subsample_size: None,
            seeds: Vec::new(),
            seed: 0,
            tol: 1e-10,
            max_sweeps: MAX_SWEEPS,
            skip_degenerate: false,
            target_support: None,
            threads: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn graph_params(&self) -> Result<GraphParams> {
        let mut p = GraphParams::new(self.bandwidth);
        p.radius = self.radius;
        p.exponent = KernelExponent::from_power(self.kernel_exponent)?;
        p.search = NeighborSearch::Auto;
        Ok(p)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            trace: false,
        }
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.intrinsic_dim == 0 {
            return Err(invalid("intrinsic dimension must be at least 1"));
        }
        if self.intrinsic_dim > self.embedding_dim {
            return Err(invalid(format!(
                "intrinsic dimension {} exceeds embedding dimension {}",
                self.intrinsic_dim, self.embedding_dim
            )));
        }
        self.graph_params()?;
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(invalid(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if let Some(r) = self.radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(invalid(format!("radius must be positive, got {r}")));
            }
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l > 0.0) {
                return Err(invalid(format!("lambda must be positive, got {l}")));
            }
        }
        if let Some(g) = &self.lambda_grid {
            if g.is_empty() || g.iter().any(|l| !(l.is_finite() && *l > 0.0)) || g.windows(2).any(|w| w[1] >= w[0]) {
                return Err(invalid("lambda grid must be positive and strictly decreasing"));
            }
        }
        if self.lambda.is_none() && self.lambda_grid.is_none() {
            geometric_grid(1.0, self.min_ratio, self.path_points)?;
        }
        if !(self.tol > 0.0) {
            return Err(invalid(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.subsample.is_some() && self.subsample_size.is_some() {
            return Err(invalid("give either an explicit subsample or a subsample size, not both"));
        }
        if self.subsample_size == Some(0) || self.subsample.as_ref().is_some_and(Vec::is_empty) {
            return Err(invalid("subsample must not be empty"));
        }
        Ok(())
    }

    /// Gradient point sets, one per repeat, each sorted.
    pub fn point_sets(&self, n: usize) -> Result<Vec<(Option<u64>, Vec<usize>)>> {
        if let Some(s) = &self.subsample {
            if let Some(&i) = s.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            return Ok(vec![(None, s)]);
        }
        match self.subsample_size {
            Some(k) if k > n => Err(invalid(format!("subsample size {k} exceeds {n} points"))),
            Some(k) => {
                let seeds = if self.seeds.is_empty() {
                    vec![self.seed]
                } else {
                    self.seeds.clone()
                };
                Ok(seeds
                    .into_iter()
                    .map(|s| {
                        let mut rng = ChaCha8Rng::seed_from_u64(s);
                        let mut idx = sample(&mut rng, n, k).into_vec();
                        idx.sort_unstable();
                        (Some(s), idx)
                    })
                    .collect())
            }
            None => Ok(vec![(None, (0..n).collect())]),
        }
    }
}

/// One entry of the selection trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub lambda: f64,
    pub support_size: usize,
    pub support: Vec<usize>,
    pub duality_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepeatReport {
    pub seed: Option<u64>,
    /// Points that entered the gradient problem.
    pub points: Vec<usize>,
    /// Requested points dropped for degenerate neighborhoods.
    pub skipped: Vec<usize>,
    pub gamma: Vec<f64>,
    pub ill_conditioned: usize,
    pub lambda_max: f64,
    pub trace: Vec<TraceEntry>,
    pub selection: Option<Selection>,
    pub selection_error: Option<String>,
    /// Certificate for the selected support on the per-point unit-normalized
    /// design at the selected penalty.
    pub diagnostics: Option<RecoveryCertificate>,
    pub diagnostics_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub created_unix: u64,
    pub config: PipelineConfig,
    pub n: usize,
    pub ambient_dim: usize,
    pub dictionary: Vec<String>,
    pub embedding_source: EmbeddingSource,
    pub eigenvalues: Option<Vec<f64>>,
    pub repeats: Vec<RepeatReport>,
    /// Number of repeats whose selected support contains each group.
    pub selection_counts: Vec<usize>,
}

/// In-memory products of a run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub graph: NeighborGraph,
    pub laplacian: Laplacian,
    pub embedding: Embedding,
    pub repeats: Vec<RepeatRun>,
    pub report: PipelineReport,
}

#[derive(Debug, Clone)]
pub struct RepeatRun {
    pub problem: LassoProblem,
    pub frames: TangentFrames,
    pub path: Vec<LassoSolution>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Design and response at the points that kept a tangent frame.
#[derive(Debug, Clone)]
pub struct GradientProblem {
    pub problem: LassoProblem,
    pub frames: TangentFrames,
    /// Points with a usable frame, in order.
    pub points: Vec<usize>,
    /// Dictionary normalizers `γ_j`.
    pub gamma: Vec<f64>,
    /// Points whose pullback system was ill conditioned.
    pub ill_conditioned: usize,
}

/// Builds the gradient problem on `points` from the shared geometry.
#[allow(clippy::too_many_arguments)]
pub fn gradient_problem(
    cloud: &PointCloud,
    graph: &NeighborGraph,
    lap: &Laplacian,
    embedding: &Embedding,
    dict: &Dictionary,
    points: &[usize],
    config: &PipelineConfig,
    mode: Parallelism,
) -> Result<GradientProblem> {
    let d = config.intrinsic_dim;
    let frames = stage("tangent", estimate_frames_at(cloud, graph, d, points, config.skip_degenerate, mode))?;
    let valid: Vec<usize> = points.iter().copied().filter(|&i| frames.get(i).is_some()).collect();
    if valid.is_empty() {
        return Err(invalid("no point has a usable tangent frame").in_stage("tangent"));
    }
    let bundle = stage("dictionary", eval_gradients(dict, cloud, &valid, mode))?;
    let gamma = stage(
        "dictionary",
        match config.normalization {
            Normalization::Ambient => normalizers(dict, &bundle, None),
            Normalization::Tangent => normalizers(dict, &bundle, Some(&frames)),
        },
    )?;
    let x = stage("dictionary", project_gradients(&bundle, &frames, &gamma))?;
    let grads = stage("pullback", pullback_gradients(cloud, lap, embedding, &frames, &valid, mode))?;
    let ill = grads.ill_conditioned_count();
    let y = grads.entries.into_iter().map(|e| e.y).collect();
    let problem = stage("flasso", LassoProblem::new(x, y, dict.names()))?;
    Ok(GradientProblem {
        problem,
        frames,
        points: valid,
        gamma,
        ill_conditioned: ill,
    })
}

/// Penalties for a problem: the configured single value or grid, or a
/// geometric path below `λ_max`.
pub fn penalty_grid(problem: &LassoProblem, config: &PipelineConfig) -> Result<Vec<f64>> {
    if let Some(l) = config.lambda {
        return Ok(vec![l]);
    }
    if let Some(g) = &config.lambda_grid {
        return Ok(g.clone());
    }
    geometric_grid(problem.lambda_max(), config.min_ratio, config.path_points)
}

/// Certificate for `support` at `lambda` on the unit-normalized design.
pub fn support_certificate(problem: &LassoProblem, support: &[usize], lambda: f64, opts: &SolveOptions) -> Result<RecoveryCertificate> {
    let x = problem.x().iter().map(unit_normalize).collect();
    let unit = LassoProblem::new(x, problem.y().to_vec(), problem.names().to_vec())?;
    let sol = crate::flasso::solve(&unit, lambda, opts)?;
    check_recovery_conditions(&unit, support, lambda, None, Some(&sol))
}

fn analyze(problem: &LassoProblem, config: &PipelineConfig) -> Result<(Vec<LassoSolution>, f64)> {
    let lambda_max = problem.lambda_max();
    let lambdas = penalty_grid(problem, config)?;
    let path = regularization_path(problem, &lambdas, &config.solve_options())?;
    Ok((path, lambda_max))
}

fn select(path: &[LassoSolution], config: &PipelineConfig) -> Result<Selection> {
    if config.lambda.is_some() {
        let s = &path[0];
        return Ok(Selection {
            index: 0,
            lambda: s.lambda,
            support: s.support.clone(),
            exact: s.support.len() == config.target_support.unwrap_or(config.intrinsic_dim),
        });
    }
    select_support(path, config.target_support.unwrap_or(config.intrinsic_dim))
}

/// Runs every step on in-memory inputs. `embedding` replaces the spectral
/// step when given.
pub fn run_pipeline_on(
    config: &PipelineConfig,
    cloud: &PointCloud,
    dict: &Dictionary,
    embedding: Option<Embedding>,
    mode: Parallelism,
) -> Result<PipelineRun> {
    config.validate()?;
    stage("dictionary", dict.validate(cloud.dim()))?;
    let sets = config.point_sets(cloud.len())?;
    if let Some(e) = &embedding {
        if e.len() != cloud.len() {
            return Err(Error::RowCountMismatch {
                expected: cloud.len(),
                found: e.len(),
            });
        }
        if e.dim() < config.intrinsic_dim {
            return Err(invalid(format!(
                "embedding has {} columns, fewer than intrinsic dimension {}",
                e.dim(),
                config.intrinsic_dim
            )));
        }
    }
    let graph = stage("graph", NeighborGraph::build(cloud, &config.graph_params()?, mode))?;
    let laplacian = Laplacian::from_graph(&graph);
    let embedding = match embedding {
        Some(e) => e,
        None => {
            let mut params = EmbeddingParams::new(config.embedding_dim);
            params.solver = config.solver;
            stage("embed", spectral_embed(&laplacian, &params, mode))?
        }
    };

    let mut repeats = Vec::with_capacity(sets.len());
    let mut reports = Vec::with_capacity(sets.len());
    for (seed, points) in sets {
        let GradientProblem {
            problem,
            frames,
            points: valid,
            gamma,
            ill_conditioned: ill,
        } = gradient_problem(cloud, &graph, &laplacian, &embedding, dict, &points, config, mode)?;
        let (path, lambda_max) = stage("flasso", analyze(&problem, config))?;
        let trace = path
            .iter()
            .map(|s| TraceEntry {
                lambda: s.lambda,
                support_size: s.support.len(),
                support: s.support.clone(),
                duality_gap: s.duality_gap,
            })
            .collect();
        let (selection, selection_error) = match select(&path, config) {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let (diagnostics, diagnostics_error) = match &selection {
            Some(s) if !s.support.is_empty() && s.support.len() < problem.p() => {
                match support_certificate(&problem, &s.support, s.lambda, &config.solve_options()) {
                    Ok(c) => (Some(c), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            }
            _ => (None, Some("selected support is empty or contains every group".into())),
        };
        let skipped = points.iter().copied().filter(|i| !valid.contains(i)).collect();
        reports.push(RepeatReport {
            seed,
            points: valid,
            skipped,
            gamma,
            ill_conditioned: ill,
            lambda_max,
            trace,
            selection,
            selection_error,
            diagnostics,
            diagnostics_error,
        });
        repeats.push(RepeatRun { problem, frames, path });
    }
    let mut selection_counts = vec![0; dict.len()];
    for r in &reports {
        if let Some(s) = &r.selection {
            for &j in &s.support {
                selection_counts[j] += 1;
            }
        }
    }
    let report = PipelineReport {
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        config: config.clone(),
        n: cloud.len(),
        ambient_dim: cloud.dim(),
        dictionary: dict.names(),
        embedding_source: embedding.source(),
        eigenvalues: embedding.eigenvalues().map(<[f64]>::to_vec),
        repeats: reports,
        selection_counts,
    };
    Ok(PipelineRun {
        graph,
        laplacian,
        embedding,
        repeats,
        report,
    })
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| invalid(format!("config is missing the {what} path")))
}

/// Loads an embedding CSV and keeps its first `m` columns.
pub fn load_embedding(path: &Path, m: usize) -> Result<Embedding> {
    let coords = io::read_matrix_csv(path)?;
    if coords.ncols() < m {
        return Err(invalid(format!(
            "embedding {} has {} columns, need {m}",
            path.display(),
            coords.ncols()
        )));
    }
    Embedding::external(coords.columns(0, m).into_owned())
}

/// Reads the configured inputs, runs, and writes the outputs.
///
/// Output layout: `config.json` (effective config), `embedding.csv`,
/// `report.json`, and per repeat `repeat_<k>/{problem.json, path.csv,
/// support.json, diagnostics.json}`.
pub fn run_pipeline(config: &PipelineConfig, mode: Parallelism) -> Result<PipelineReport> {
    config.validate()?;
    let out = required(&config.output, "output")?;
    io::write_json(&out.join("config.json"), config)?;
    let cloud = stage("input", io::read_cloud(required(&config.cloud, "cloud")?, config.skip_header))?;
    let dict = stage("input", Dictionary::load(required(&config.dictionary, "dictionary")?))?;
    let embedding = match &config.embedding {
        Some(p) => Some(stage("input", load_embedding(p, config.embedding_dim))?),
        None => None,
    };
    let run = run_pipeline_on(config, &cloud, &dict, embedding, mode)?;
    io::write_matrix_csv(&out.join("embedding.csv"), run.embedding.coords())?;
    for (k, (rep, r)) in run.repeats.iter().zip(&run.report.repeats).enumerate() {
        let dir = out.join(format!("repeat_{k}"));
        io::write_problem(&dir.join("problem.json"), &rep.problem, &r.points)?;
        io::write_path_csv(&dir.join("path.csv"), rep.problem.names(), &rep.path)?;
        io::write_json(&dir.join("support.json"), &SupportSummary::new(&rep.path, r))?;
        io::write_json(&dir.join("diagnostics.json"), &r.diagnostics)?;
    }
    io::write_json(&out.join("report.json"), &run.report)?;
    Ok(run.report)
}

/// Contents of `support.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportSummary {
    pub support: Option<Vec<usize>>,
    pub lambda_selected: Option<f64>,
    pub lambdas: Vec<f64>,
    pub gaps: Vec<f64>,
    pub trace: Vec<TraceEntry>,
}

impl SupportSummary {
    fn new(path: &[LassoSolution], r: &RepeatReport) -> Self {
        SupportSummary {
            support: r.selection.as_ref().map(|s| s.support.clone()),
            lambda_selected: r.selection.as_ref().map(|s| s.lambda),
            lambdas: path.iter().map(|s| s.lambda).collect(),
            gaps: path.iter().map(|s| s.duality_gap).collect(),
            trace: r.trace.clone(),
        }
    }

    pub fn from_path(path: &[LassoSolution], selection: Option<&Selection>) -> Self {
        SupportSummary {
            support: selection.map(|s| s.support.clone()),
            lambda_selected: selection.map(|s| s.lambda),
            lambdas: path.iter().map(|s| s.lambda).collect(),
            gaps: path.iter().map(|s| s.duality_gap).collect(),
            trace: path
                .iter()
                .map(|s| TraceEntry {
                    lambda: s.lambda,
                    support_size: s.support.len(),
                    support: s.support.clone(),
                    duality_gap: s.duality_gap,
                })
                .collect(),
        }
    }
}

pub mod stages;
