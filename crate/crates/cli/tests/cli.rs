use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mlasso(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlasso"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_every_kind() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in [
        "example1_g1",
        "example1_g2",
        "example2",
        "rigid_skeleton_torus",
        "circle",
        "flat_plane",
        "linear_isometry",
    ] {
        let o = mlasso(
            &[
                "synth", "--kind", kind, "--n", "60", "--noise", "0.01", "--seed", "2", "--out", kind,
            ],
            tmp.path(),
        );
        assert_eq!(code(&o), 0, "{kind}: {}", String::from_utf8_lossy(&o.stderr));
        let dir = tmp.path().join(kind);
        assert!(dir.join("cloud.csv").exists());
        let truth = json(&dir.join("truth.json"));
        assert!(truth["true_support"].is_array());
        assert!(truth["angles"].is_array());
    }
    let ex = tmp.path().join("example1_g1");
    assert!(ex.join("problem.json").exists());
    assert_eq!(json(&ex.join("truth.json"))["true_support"], serde_json::json!([0, 1]));
    assert!(tmp.path().join("rigid_skeleton_torus/dictionary.json").exists());
}

#[test]
fn unknown_kind_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mlasso(&["synth", "--kind", "sphere", "--n", "10", "--out", "x"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn flasso_recovers_flat_support() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&mlasso(&["synth", "--kind", "example1_g1", "--n", "100", "--out", "d"], tmp.path())),
        0
    );
    let o = mlasso(
        &[
            "flasso",
            "--design",
            "d/problem.json",
            "--bandwidth",
            "1",
            "-d",
            "2",
            "-m",
            "2",
            "--out",
            "f",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&tmp.path().join("f/support.json"));
    assert_eq!(summary["support"], serde_json::json!([0, 1]));
    let csv = fs::read_to_string(tmp.path().join("f/path.csv")).unwrap();
    assert!(csv.starts_with("lambda,group_index,group_name,group_norm,norm_1"));
    assert_eq!(csv.lines().count(), 1 + 50 * 4);

    let o = mlasso(
        &[
            "diagnose",
            "--problem",
            "d/problem.json",
            "--support",
            "0,1",
            "--lambda",
            "1",
            "--bandwidth",
            "1",
            "-d",
            "2",
            "-m",
            "2",
            "--out",
            "f",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cert: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cert["s"], 2);
    assert!(tmp.path().join("f/certificate.json").exists());
}

#[test]
fn solver_cap_is_a_numerical_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&mlasso(
            &["synth", "--kind", "example2", "--n", "50", "--noise", "0.1", "--out", "d"],
            tmp.path()
        )),
        0
    );
    let o = mlasso(
        &[
            "flasso",
            "--design",
            "d/problem.json",
            "--bandwidth",
            "1",
            "--lambda",
            "0.01",
            "--tol",
            "1e-14",
            "--max-sweeps",
            "1",
            "--out",
            "f",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_with_overrides_runs_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&mlasso(
            &[
                "synth",
                "--kind",
                "rigid_skeleton_torus",
                "--n",
                "1500",
                "--noise",
                "0.01",
                "--seed",
                "4",
                "--out",
                "d"
            ],
            tmp.path()
        )),
        0
    );
    let config = serde_json::json!({
        "cloud": "d/cloud.csv",
        "dictionary": "d/dictionary.json",
        "bandwidth": 0.6,
        "radius": 0.9,
        "intrinsic_dim": 2,
        "embedding_dim": 3,
        "subsample_size": 40,
        "seeds": [1],
        "skip_degenerate": true,
        "path_points": 10
    });
    fs::write(tmp.path().join("config.json"), config.to_string()).unwrap();
    let o = mlasso(
        &[
            "pipeline",
            "--config",
            "config.json",
            "--seeds",
            "1,2",
            "--threads",
            "1",
            "--out",
            "run",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = tmp.path().join("run");
    let echoed = json(&run.join("config.json"));
    assert_eq!(echoed["seeds"], serde_json::json!([1, 2]));
    assert_eq!(echoed["bandwidth"], 0.6);
    assert_eq!(echoed["threads"], 1);
    let report = json(&run.join("report.json"));
    assert_eq!(report["repeats"].as_array().unwrap().len(), 2);
    for k in 0..2 {
        for f in ["problem.json", "path.csv", "support.json", "diagnostics.json"] {
            assert!(run.join(format!("repeat_{k}")).join(f).exists());
        }
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("repeat 1: support"));
}

#[test]
fn staged_commands_produce_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&mlasso(
            &[
                "synth",
                "--kind",
                "rigid_skeleton_torus",
                "--n",
                "1200",
                "--noise",
                "0.01",
                "--out",
                "d",
                "--binary"
            ],
            tmp.path()
        )),
        0
    );
    let common = [
        "--cloud",
        "d/cloud.bin",
        "--dictionary",
        "d/dictionary.json",
        "--bandwidth",
        "0.6",
        "--radius",
        "0.9",
        "-d",
        "2",
        "-m",
        "3",
        "--subsample-size",
        "30",
        "--skip-degenerate",
        "--out",
        "s",
    ];
    for stage in ["graph", "laplacian", "embed", "tangent", "rmetric", "pullback"] {
        let mut args = vec![stage];
        args.extend(common);
        let o = mlasso(&args, tmp.path());
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "kernel.csv",
        "laplacian.csv",
        "embedding.csv",
        "frames.csv",
        "metrics.csv",
        "pullback.csv",
        "problem.json",
    ] {
        assert!(tmp.path().join("s").join(f).exists(), "{f}");
    }
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mlasso(&["pipeline", "--bandwidth", "0.5", "-d", "3", "-m", "2", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 2);
    let o = mlasso(&["graph", "--cloud", "missing.csv", "--bandwidth", "0.5", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 4);
    let o = mlasso(&["laplacian", "--bandwidth", "0.5", "--out", "empty"], tmp.path());
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("graph.json"));
    fs::write(tmp.path().join("bad.csv"), "1,2\n3,x\n").unwrap();
    let o = mlasso(&["graph", "--cloud", "bad.csv", "--bandwidth", "0.5", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = mlasso(
        &[
            "flasso",
            "--design",
            "nothing.json",
            "--bandwidth",
            "1",
            "--lambda-grid",
            "1,2",
            "--out",
            "o",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 2);
}
