//! `mlasso`: command-line front end for manifold-lasso.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Map, Value};

use manifold_lasso::io;
use manifold_lasso::pipeline::stages::{self, run_stage, Stage};
use manifold_lasso::pipeline::{run_pipeline, PipelineConfig};
use manifold_lasso::synth::{generate, SyntheticKind, SyntheticSpec};
use manifold_lasso::{exec, Error, ErrorKind, Parallelism};

#[derive(Parser)]
#[command(name = "mlasso", version, about = "Explain embedding coordinates with sparse dictionary functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic data set with known support.
    Synth(SynthArgs),
    /// Build the neighbor graph and kernel matrix.
    Graph(ConfigArgs),
    /// Renormalized graph Laplacian from a stored kernel.
    Laplacian(ConfigArgs),
    /// Spectral embedding from a stored Laplacian.
    Embed(ConfigArgs),
    /// Local PCA tangent frames at the selected points.
    Tangent(ConfigArgs),
    /// Pushforward metrics of the embedding.
    Rmetric(ConfigArgs),
    /// Pulled-back embedding gradients and, with a dictionary, the design.
    Pullback(ConfigArgs),
    /// Regularization path on a stored problem.
    Flasso(FlassoArgs),
    /// Recovery certificate for a support on a stored problem.
    Diagnose(DiagnoseArgs),
    /// Every step end to end.
    Pipeline(ConfigArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// One of example1_g1, example1_g2, example2, rigid_skeleton_torus,
    /// circle, flat_plane, linear_isometry.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n: usize,
    /// Noise variance.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ambient dimension, for kinds that allow a choice.
    #[arg(long)]
    dim: Option<usize>,
    /// Intrinsic dimension, for kinds that allow a choice.
    #[arg(long)]
    intrinsic_dim: Option<usize>,
    /// Write the cloud in the binary format instead of CSV.
    #[arg(long)]
    binary: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by every configured command. Each one overrides the key of
/// the same name in the `--config` file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output (and artifact) directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// The cloud CSV starts with a header row.
    #[arg(long)]
    skip_header: bool,
    /// Embedding CSV, used instead of the spectral embedding.
    #[arg(long)]
    embedding: Option<PathBuf>,
    /// Dictionary JSON.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Kernel bandwidth ε.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Neighborhood radius (default 3ε).
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, value_parser = ["1", "2"])]
    kernel_exponent: Option<String>,
    /// Intrinsic dimension d.
    #[arg(short = 'd', long)]
    intrinsic_dim: Option<usize>,
    /// Embedding dimension m.
    #[arg(short = 'm', long)]
    embedding_dim: Option<usize>,
    #[arg(long, value_parser = ["auto", "dense", "lanczos"])]
    solver: Option<String>,
    /// Single penalty instead of a path.
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated decreasing penalties, or `geometric:<points>:<ratio>`.
    #[arg(long)]
    lambda_grid: Option<String>,
    #[arg(long, value_parser = ["ambient", "tangent"])]
    normalization: Option<String>,
    /// Comma-separated point indices.
    #[arg(long, value_delimiter = ',')]
    subsample: Option<Vec<usize>>,
    /// Random subsample size, drawn once per seed.
    #[arg(long)]
    subsample_size: Option<usize>,
    /// Comma-separated seeds, one repeat each.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Duality-gap tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// Drop points with degenerate neighborhoods instead of failing.
    #[arg(long)]
    skip_degenerate: bool,
    /// Support size sought by the selection rule (default d).
    #[arg(long)]
    target_support: Option<usize>,
    /// Worker threads (0 uses every core).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct FlassoArgs {
    /// Stored problem (`problem.json`).
    #[arg(long)]
    design: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Stored problem (`problem.json`).
    #[arg(long)]
    problem: PathBuf,
    /// Comma-separated group indices.
    #[arg(long, value_delimiter = ',', required = true)]
    support: Vec<usize>,
    /// JSON array of per-point coefficients (row-major `p x m`).
    #[arg(long)]
    beta_true: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Io => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn parse_grid(spec: &str, over: &mut Map<String, Value>) -> Result<(), Failure> {
    if let Some(rest) = spec.strip_prefix("geometric:") {
        let (points, ratio) = rest
            .split_once(':')
            .ok_or_else(|| usage(format!("bad grid {spec:?}, expected geometric:<points>:<ratio>")))?;
        let points: usize = points.parse().map_err(|_| usage(format!("bad point count in {spec:?}")))?;
        let ratio: f64 = ratio.parse().map_err(|_| usage(format!("bad ratio in {spec:?}")))?;
        over.insert("path_points".into(), json!(points));
        over.insert("min_ratio".into(), json!(ratio));
        over.insert("lambda_grid".into(), Value::Null);
    } else {
        let values = spec
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| usage(format!("bad penalty list {spec:?}")))?;
        over.insert("lambda_grid".into(), json!(values));
    }
    Ok(())
}

impl ConfigArgs {
    /// The config file (or defaults) with every given flag applied.
    fn resolve(&self) -> Result<PipelineConfig, Failure> {
        let base = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let mut value = serde_json::to_value(&base).map_err(Error::from)?;
        let obj = value.as_object_mut().expect("config serializes to an object");
        let mut over = Map::new();
        let mut set = |k: &str, v: Value| {
            over.insert(k.to_string(), v);
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| json!(p));
        for (k, v) in [
            ("output", path(&self.out)),
            ("cloud", path(&self.cloud)),
            ("embedding", path(&self.embedding)),
            ("dictionary", path(&self.dictionary)),
            ("bandwidth", self.bandwidth.map(|v| json!(v))),
            ("radius", self.radius.map(|v| json!(v))),
            (
                "kernel_exponent",
                self.kernel_exponent.as_ref().map(|v| json!(v.parse::<u32>().unwrap_or(2))),
            ),
            ("intrinsic_dim", self.intrinsic_dim.map(|v| json!(v))),
            ("embedding_dim", self.embedding_dim.map(|v| json!(v))),
            ("solver", self.solver.as_ref().map(|v| json!(v))),
            ("lambda", self.lambda.map(|v| json!(v))),
            ("normalization", self.normalization.as_ref().map(|v| json!(v))),
            ("subsample", self.subsample.as_ref().map(|v| json!(v))),
            ("subsample_size", self.subsample_size.map(|v| json!(v))),
            ("seeds", self.seeds.as_ref().map(|v| json!(v))),
            ("seed", self.seed.map(|v| json!(v))),
            ("tol", self.tol.map(|v| json!(v))),
            ("max_sweeps", self.max_sweeps.map(|v| json!(v))),
            ("target_support", self.target_support.map(|v| json!(v))),
            ("threads", self.threads.map(|v| json!(v))),
        ] {
            if let Some(v) = v {
                set(k, v);
            }
        }
        if self.skip_header {
            set("skip_header", json!(true));
        }
        if self.skip_degenerate {
            set("skip_degenerate", json!(true));
        }
        if let Some(g) = &self.lambda_grid {
            parse_grid(g, &mut over)?;
        }
        obj.extend(over);
        let config: PipelineConfig = serde_json::from_value(value).map_err(Error::from)?;
        config.validate()?;
        Ok(config)
    }
}

fn output_dir(config: &PipelineConfig) -> Result<&Path, Failure> {
    let dir = config
        .output
        .as_deref()
        .ok_or_else(|| usage("an output directory is required (--out)"))?;
    std::fs::create_dir_all(dir).map_err(|source| {
        Failure::from(Error::Io {
            path: dir.to_path_buf(),
            source,
        })
    })?;
    Ok(dir)
}

/// Resolves the config, echoes it to the output directory, and runs `f`
/// under the configured thread cap.
fn with_config<T: Send>(args: &ConfigArgs, f: impl FnOnce(&PipelineConfig) -> Result<T, Error> + Send) -> Result<T, Failure> {
    let config = args.resolve()?;
    let dir = output_dir(&config)?;
    io::write_json(&dir.join("config.json"), &config)?;
    info!("effective config written to {}", dir.join("config.json").display());
    Ok(exec::with_threads(config.threads, || f(&config))?)
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let kind: SyntheticKind = args.kind.parse()?;
    let spec = SyntheticSpec {
        kind,
        n: args.n,
        noise_sigma2: args.noise,
        ambient_dim: args.dim,
        intrinsic_dim: args.intrinsic_dim,
        seed: args.seed,
    };
    let s = generate(&spec)?;
    let out = &args.out;
    std::fs::create_dir_all(out).map_err(|source| Failure::from(Error::Io { path: out.clone(), source }))?;
    if args.binary {
        io::write_cloud_binary(&out.join("cloud.bin"), &s.cloud)?;
    } else {
        io::write_cloud_csv(&out.join("cloud.csv"), &s.cloud)?;
    }
    if let Some(specs) = s.dictionary.as_ref().and_then(|d| d.specs()) {
        io::write_json(&out.join("dictionary.json"), &specs)?;
    }
    if let Some(problem) = &s.problem {
        let points: Vec<usize> = (0..problem.n()).collect();
        io::write_problem(&out.join("problem.json"), problem, &points)?;
    }
    if let Some(e) = &s.embedding {
        io::write_matrix_csv(&out.join("embedding.csv"), e)?;
    }
    io::write_json(
        &out.join("truth.json"),
        &json!({ "spec": spec, "true_support": s.true_support, "angles": s.latent }),
    )?;
    info!("wrote {} points of kind {} to {}", s.cloud.len(), kind.name(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mode = Parallelism::Parallel;
    let staged = |which: Stage, args: &ConfigArgs| with_config(args, |c| run_stage(which, c, mode));
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Graph(a) => staged(Stage::Graph, &a),
        Command::Laplacian(a) => staged(Stage::Laplacian, &a),
        Command::Embed(a) => staged(Stage::Embed, &a),
        Command::Tangent(a) => staged(Stage::Tangent, &a),
        Command::Rmetric(a) => staged(Stage::Rmetric, &a),
        Command::Pullback(a) => staged(Stage::Pullback, &a),
        Command::Flasso(a) => with_config(&a.config, |c| {
            let out = c.output.as_deref().expect("output checked");
            stages::flasso(c, &a.design, out)
        }),
        Command::Diagnose(a) => {
            let lambda = a.config.lambda.ok_or_else(|| usage("diagnose needs --lambda"))?;
            let cert = with_config(&a.config, |c| {
                let cert = stages::diagnose(&a.problem, &a.support, lambda, a.beta_true.as_deref(), c)?;
                io::write_json(&c.output.as_deref().expect("output checked").join("certificate.json"), &cert)?;
                Ok(cert)
            })?;
            println!("{}", serde_json::to_string_pretty(&cert).map_err(Error::from)?);
            Ok(())
        }
        Command::Pipeline(a) => {
            let report = with_config(&a, |c| run_pipeline(c, mode))?;
            for (k, r) in report.repeats.iter().enumerate() {
                match &r.selection {
                    Some(s) => println!("repeat {k}: support {:?} at lambda {:.6e}", s.support, s.lambda),
                    None => println!("repeat {k}: no selection ({})", r.selection_error.as_deref().unwrap_or("unknown")),
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
