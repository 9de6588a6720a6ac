//! Runs the rigid-skeleton experiment and prints the support of each repeat.
//!
//! Usage: `cargo run --release --example rigid_skeleton [n] [repeats]`

use std::time::Instant;

use manifold_lasso::pipeline::{run_pipeline_on, PipelineConfig};
use manifold_lasso::synth::rigid_skeleton;
use manifold_lasso::Parallelism;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(50_000), |s| s.parse())?;
    let repeats: u64 = args.next().map_or(Ok(8), |s| s.parse())?;
    let t = Instant::now();
    let skel = rigid_skeleton(n, 0.01, 0)?;
    let config = PipelineConfig {
        bandwidth: 0.533,
        radius: Some(0.8),
        intrinsic_dim: 2,
        embedding_dim: 3,
        subsample_size: Some(200),
        seeds: (1..=repeats).collect(),
        skip_degenerate: true,
        ..PipelineConfig::default()
    };
    let run = run_pipeline_on(&config, &skel.cloud, &skel.dictionary, None, Parallelism::Parallel)?;
    println!("eigenvalues {:?}", run.report.eigenvalues);
    for r in &run.report.repeats {
        println!(
            "seed {:?}: support {:?} gamma {:?}",
            r.seed,
            r.selection.as_ref().map(|s| &s.support),
            r.gamma
        );
    }
    println!("selection counts {:?} in {:.1?}", run.report.selection_counts, t.elapsed());
    Ok(())
}
