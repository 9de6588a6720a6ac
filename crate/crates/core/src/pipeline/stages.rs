//! File-based stages. Each stage reads the previous stage's artifacts from
//! the output directory and writes its own there.
//!
//! | stage | reads | writes |
//! |---|---|---|
//! | graph | cloud | `kernel.csv`, `graph.json` |
//! | laplacian | `kernel.csv`, `graph.json` | `laplacian.csv`, `renormalized.csv`, `laplacian.json` |
//! | embed | `renormalized.csv`, `laplacian.json` | `embedding.csv`, `eigenvalues.json` |
//! | tangent | cloud, `kernel.csv`, `graph.json` | `frames.csv`, `spectra.csv`, `points.json` |
//! | rmetric | Laplacian, embedding, optional `points.json` | `metrics.csv` |
//! | pullback | cloud, Laplacian, embedding, frames, dictionary | `metrics.csv`, `pullback.csv`, `problem.json` |
//! | flasso | `problem.json` | `path.csv`, `support.json` |
//! | diagnose | `problem.json` | `certificate.json` |

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{load_embedding, penalty_grid, required, stage, PipelineConfig, SupportSummary};
use crate::diagnostics::{check_recovery_conditions, RecoveryCertificate};
use crate::dictionary::{eval_gradients, normalizers, project_gradients, unit_normalize, Dictionary, Normalization};
use crate::embedding::{spectral_embed, EmbeddingParams};
use crate::error::{invalid, Error, Result};
use crate::exec::Parallelism;
use crate::flasso::{regularization_path, select_support, solve, LassoProblem};
use crate::graph::{KernelExponent, Laplacian, NeighborGraph, PointCloud};
use crate::io;
use crate::pullback::pullback_gradients;
use crate::tangent::{estimate_frames_at, pushforward_metrics, Frame, TangentFrames};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Graph,
    Laplacian,
    Embed,
    Tangent,
    Rmetric,
    Pullback,
    Flasso,
}

/// Metadata stored next to the kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphMeta {
    pub n: usize,
    pub bandwidth: f64,
    pub radius: f64,
    pub kernel_exponent: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplacianMeta {
    pub n: usize,
    pub bandwidth: f64,
}

fn out_dir(config: &PipelineConfig) -> Result<&Path> {
    required(&config.output, "output")
}

fn artifact(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::MissingArtifact(p))
    }
}

fn load_cloud(config: &PipelineConfig) -> Result<PointCloud> {
    io::read_cloud(required(&config.cloud, "cloud")?, config.skip_header)
}

pub fn run_stage(which: Stage, config: &PipelineConfig, mode: Parallelism) -> Result<()> {
    let name = match which {
        Stage::Graph => "graph",
        Stage::Laplacian => "laplacian",
        Stage::Embed => "embed",
        Stage::Tangent => "tangent",
        Stage::Rmetric => "rmetric",
        Stage::Pullback => "pullback",
        Stage::Flasso => "flasso",
    };
    let r = match which {
        Stage::Graph => graph(config, mode),
        Stage::Laplacian => laplacian(config),
        Stage::Embed => embed(config, mode),
        Stage::Tangent => tangent(config, mode),
        Stage::Rmetric => rmetric(config, mode),
        Stage::Pullback => pullback(config, mode),
        Stage::Flasso => {
            let dir = out_dir(config)?;
            flasso(config, &artifact(dir, "problem.json")?, dir)
        }
    };
    stage(name, r)
}

pub fn graph(config: &PipelineConfig, mode: Parallelism) -> Result<()> {
    let dir = out_dir(config)?;
    let cloud = load_cloud(config)?;
    let g = NeighborGraph::build(&cloud, &config.graph_params()?, mode)?;
    io::write_coo_csv(&dir.join("kernel.csv"), g.kernel())?;
    io::write_json(
        &dir.join("graph.json"),
        &GraphMeta {
            n: g.len(),
            bandwidth: g.bandwidth(),
            radius: g.radius(),
            kernel_exponent: g.exponent().power(),
        },
    )
}

pub fn load_graph(dir: &Path) -> Result<NeighborGraph> {
    let meta: GraphMeta = io::read_json(&artifact(dir, "graph.json")?)?;
    let kernel = io::read_coo_csv(&artifact(dir, "kernel.csv")?, Some((meta.n, meta.n)))?;
    NeighborGraph::from_kernel(
        kernel,
        meta.bandwidth,
        meta.radius,
        KernelExponent::from_power(meta.kernel_exponent)?,
    )
}

pub fn laplacian(config: &PipelineConfig) -> Result<()> {
    let dir = out_dir(config)?;
    let lap = Laplacian::from_graph(&load_graph(dir)?);
    io::write_coo_csv(&dir.join("laplacian.csv"), lap.matrix())?;
    io::write_coo_csv(&dir.join("renormalized.csv"), lap.renormalized())?;
    io::write_json(
        &dir.join("laplacian.json"),
        &LaplacianMeta {
            n: lap.len(),
            bandwidth: lap.bandwidth(),
        },
    )
}

pub fn load_laplacian(dir: &Path) -> Result<Laplacian> {
    let meta: LaplacianMeta = io::read_json(&artifact(dir, "laplacian.json")?)?;
    let lt = io::read_coo_csv(&artifact(dir, "renormalized.csv")?, Some((meta.n, meta.n)))?;
    Laplacian::from_renormalized(lt, meta.bandwidth)
}

pub fn embed(config: &PipelineConfig, mode: Parallelism) -> Result<()> {
    let dir = out_dir(config)?;
    let lap = load_laplacian(dir)?;
    let mut params = EmbeddingParams::new(config.embedding_dim);
    params.solver = config.solver;
    let e = spectral_embed(&lap, &params, mode)?;
    io::write_matrix_csv(&dir.join("embedding.csv"), e.coords())?;
    io::write_json(&dir.join("eigenvalues.json"), &e.eigenvalues())
}

fn first_point_set(config: &PipelineConfig, n: usize) -> Result<Vec<usize>> {
    Ok(config.point_sets(n)?.swap_remove(0).1)
}

pub fn tangent(config: &PipelineConfig, mode: Parallelism) -> Result<()> {
    let dir = out_dir(config)?;
    let cloud = load_cloud(config)?;
    let g = load_graph(dir)?;
    let points = first_point_set(config, cloud.len())?;
    let frames = estimate_frames_at(&cloud, &g, config.intrinsic_dim, &points, config.skip_degenerate, mode)?;
    let valid = frames.valid_points();
    io::write_bundle_csv(&dir.join("frames.csv"), valid.iter().map(|&i| (i, frames.basis(i).expect("valid"))))?;
    let spectra: Vec<DMatrix<f64>> = valid
        .iter()
        .map(|&i| {
            let s = &frames.get(i).expect("valid").spectrum;
            DMatrix::from_row_slice(1, s.len(), s)
        })
        .collect();
    io::write_bundle_csv(&dir.join("spectra.csv"), valid.iter().copied().zip(&spectra))?;
    io::write_json(&dir.join("points.json"), &valid)
}

pub fn load_frames(dir: &Path, n: usize, d: usize) -> Result<TangentFrames> {
    let bases = io::read_bundle_csv(&artifact(dir, "frames.csv")?)?;
    let spectra = io::read_bundle_csv(&artifact(dir, "spectra.csv")?)?;
    let mut frames = vec![None; n];
    for ((i, basis), (i2, s)) in bases.into_iter().zip(spectra) {
        if i >= n || i != i2 || basis.ncols() != d {
            return Err(invalid(format!("frame for point {i} does not match the data")));
        }
        frames[i] = Some(Frame {
            basis,
            spectrum: s.as_slice().to_vec(),
        });
    }
    Ok(TangentFrames::new(d, frames))
}

fn stage_embedding(config: &PipelineConfig, dir: &Path) -> Result<crate::embedding::Embedding> {
    let path = match &config.embedding {
        Some(p) => p.clone(),
        None => artifact(dir, "embedding.csv")?,
    };
    load_embedding(&path, config.embedding_dim)
}

/// Pushforward metrics at the tangent stage's points, or at every point
/// when that stage has not run.
pub fn rmetric(config: &PipelineConfig, mode: Parallelism) -> Result<()> {
    let dir = out_dir(config)?;
    let lap = load_laplacian(dir)?;
    let embedding = stage_embedding(config, dir)?;
    let points: Vec<usize> = match artifact(dir, "points.json") {
        Ok(p) => io::read_json(&p)?,
        Err(_) => (0..lap.len()).collect(),
    };
    let metrics = pushforward_metrics(&lap, &embedding, config.intrinsic_dim, &points, mode)?;
    io::write_bundle_csv(&dir.join("metrics.csv"), points.iter().copied().zip(metrics.iter().map(|m| &m.g)))
}

pub fn pullback(config: &PipelineConfig, mode: Parallelism) -> Result<()> {
    let dir = out_dir(config)?;
    let cloud = load_cloud(config)?;
    let lap = load_laplacian(dir)?;
    let embedding = stage_embedding(config, dir)?;
    let frames = load_frames(dir, cloud.len(), config.intrinsic_dim)?;
    let points: Vec<usize> = io::read_json(&artifact(dir, "points.json")?)?;
    let metrics = pushforward_metrics(&lap, &embedding, config.intrinsic_dim, &points, mode)?;
    io::write_bundle_csv(&dir.join("metrics.csv"), points.iter().copied().zip(metrics.iter().map(|m| &m.g)))?;
    let grads = pullback_gradients(&cloud, &lap, &embedding, &frames, &points, mode)?;
    io::write_bundle_csv(
        &dir.join("pullback.csv"),
        points.iter().copied().zip(grads.entries.iter().map(|e| &e.y)),
    )?;
    if let Some(dpath) = &config.dictionary {
        let dict = Dictionary::load(dpath)?;
        let bundle = eval_gradients(&dict, &cloud, &points, mode)?;
        let gamma = match config.normalization {
            Normalization::Ambient => normalizers(&dict, &bundle, None)?,
            Normalization::Tangent => normalizers(&dict, &bundle, Some(&frames))?,
        };
        let x = project_gradients(&bundle, &frames, &gamma)?;
        let y = grads.entries.into_iter().map(|e| e.y).collect();
        io::write_problem(&dir.join("problem.json"), &LassoProblem::new(x, y, dict.names())?, &points)?;
    }
    Ok(())
}

/// Regularization path on a stored problem, written to `out`.
pub fn flasso(config: &PipelineConfig, design: &Path, out: &Path) -> Result<()> {
    let (problem, _) = io::read_problem(design)?;
    let lambdas = penalty_grid(&problem, config)?;
    let path = regularization_path(&problem, &lambdas, &config.solve_options())?;
    let target = config.target_support.unwrap_or(config.intrinsic_dim);
    let selection = if config.lambda.is_some() {
        None
    } else {
        select_support(&path, target).ok()
    };
    io::write_path_csv(&out.join("path.csv"), problem.names(), &path)?;
    io::write_json(&out.join("support.json"), &SupportSummary::from_path(&path, selection.as_ref()))
}

/// Certificate for `support` at `lambda` on the unit-normalized form of a
/// stored problem. With `beta_true` (row-major `p x m` per point, in the
/// stored scaling), the truth-based checks run too.
pub fn diagnose(
    design: &Path,
    support: &[usize],
    lambda: f64,
    beta_true: Option<&Path>,
    config: &PipelineConfig,
) -> Result<RecoveryCertificate> {
    let (problem, _) = io::read_problem(design)?;
    let truth = match beta_true {
        Some(p) => {
            let b: Vec<Vec<f64>> = io::read_json(p)?;
            if b.len() != problem.n() {
                return Err(Error::RowCountMismatch {
                    expected: problem.n(),
                    found: b.len(),
                });
            }
            let mats = b
                .iter()
                .map(|v| {
                    if v.len() == problem.p() * problem.m() {
                        Ok(DMatrix::from_row_slice(problem.p(), problem.m(), v))
                    } else {
                        Err(invalid("true coefficients have the wrong shape"))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Some(mats)
        }
        None => None,
    };
    // coefficients for unit columns
    let truth = truth.map(|mats| {
        mats.into_iter()
            .zip(problem.x())
            .map(|(mut b, x)| {
                for j in 0..problem.p() {
                    let norm = x.column(j).norm();
                    b.row_mut(j).scale_mut(norm);
                }
                b
            })
            .collect::<Vec<_>>()
    });
    let x = problem.x().iter().map(unit_normalize).collect();
    let unit = LassoProblem::new(x, problem.y().to_vec(), problem.names().to_vec())?;
    let sol = solve(&unit, lambda, &config.solve_options())?;
    check_recovery_conditions(&unit, support, lambda, truth.as_deref(), Some(&sol))
}
