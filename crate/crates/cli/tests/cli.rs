use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bregfw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bregfw"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("exp.toml");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

const SMALL: &str = r#"
name = "small"
repetitions = 2
seed = 7
max_iters = 150

[problem]
recipe = "kl_inverse"
m = 6
n = 10

[[solver]]
id = "BregFW"

[[solver]]
id = "MD"
"#;

/// Drops the trailing `elapsed_seconds` column.
fn without_time(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

#[test]
fn run_writes_traces_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let o = bregfw(&["run", &cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("solver,runs,failed"));
    assert_eq!(stdout.lines().count(), 3);
    for label in ["BregFW", "MD"] {
        for rep in 0..2 {
            let trace =
                fs::read_to_string(out_dir.join(format!("traces/{label}_rep{rep}.csv"))).unwrap();
            assert!(trace.starts_with(
                "t,primal,fw_gap,gamma,step_kind,L_t,nu_t,inner_evals,elapsed_seconds\n"
            ));
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 4);
    assert!(out_dir.join("summary.csv").exists());
}

#[test]
fn sequential_and_parallel_runs_write_the_same_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(bregfw(&["run", &cfg, "--output-dir", a.to_str().unwrap()])
        .status
        .success());
    assert!(bregfw(&[
        "run",
        &cfg,
        "--sequential",
        "--output-dir",
        b.to_str().unwrap()
    ])
    .status
    .success());
    for name in [
        "BregFW_rep0.csv",
        "BregFW_rep1.csv",
        "MD_rep0.csv",
        "MD_rep1.csv",
    ] {
        let x = fs::read_to_string(a.join("traces").join(name)).unwrap();
        let y = fs::read_to_string(b.join("traces").join(name)).unwrap();
        assert_eq!(without_time(&x), without_time(&y), "{name}");
    }
}

#[test]
fn invalid_config_exits_with_one_and_points_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("\"MD\"", "\"GradientDescent\""));
    let o = bregfw(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 16"), "{err}");
    assert!(err.contains("GradientDescent"), "{err}");
}

#[test]
fn missing_config_exits_with_one() {
    assert_eq!(
        bregfw(&["run", "/nonexistent/exp.toml"]).status.code(),
        Some(1)
    );
}

#[test]
fn failing_solver_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL.replace(
            "[[solver]]\nid = \"MD\"",
            "[[solver]]\nid = \"ProjGD\"\nstep = 1e300",
        ),
    );
    let out_dir = dir.path().join("out");
    let o = bregfw(&["run", &cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(out_dir.join("summary.json").exists());
}

#[test]
fn check_reports_verdicts_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = bregfw(&["check", &cfg]);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let verdicts = report["verdicts"].as_array().unwrap();
    let names: Vec<&str> = verdicts
        .iter()
        .map(|v| v["check"].as_str().unwrap())
        .collect();
    for want in [
        "gradient_fd",
        "descent_lemma",
        "scaling_exponent",
        "lmo",
        "solver:BregFW",
    ] {
        assert!(names.contains(&want), "{names:?}");
    }
    let fd = verdicts
        .iter()
        .find(|v| v["check"] == "gradient_fd")
        .unwrap();
    assert_eq!(fd["passed"], true);
}

#[test]
fn lmo_test_matches_brute_force() {
    for spec in [
        "simplex:n=6",
        "box:n=5,lo=-1,hi=2",
        "k_sparse:n=6,k=3",
        "ball:n=4,b=2",
    ] {
        let o = bregfw(&["lmo-test", spec, "--directions", "100"]);
        assert!(o.status.success(), "{spec}");
        let a: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(a["mismatches"], 0, "{spec}");
        assert_eq!(a["directions"], 100, "{spec}");
    }
}

#[test]
fn lmo_test_rejects_bad_region() {
    assert_eq!(
        bregfw(&["lmo-test", "k_sparse:n=3,k=5"]).status.code(),
        Some(1)
    );
    assert_eq!(bregfw(&["lmo-test", "hexagon:n=3"]).status.code(), Some(1));
}

#[test]
fn nu_est_is_one_for_the_euclidean_kernel() {
    let o = bregfw(&["nu-est", "euclidean", "box:n=4"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["nu_hat"], 1.0);
    assert_eq!(
        bregfw(&["nu-est", "cosh", "box:n=4"]).status.code(),
        Some(1)
    );
}

#[test]
fn bundled_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            bregfw::experiment::load_config(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 2);
}
