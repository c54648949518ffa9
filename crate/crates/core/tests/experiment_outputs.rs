use std::fs;

use bregfw::experiment::{
    parse_config, read_traces, run_experiment, write_outputs, ExperimentConfig, Stats,
};

fn config(dir: &std::path::Path, parallel: bool) -> ExperimentConfig {
    let mut c = parse_config(
        r#"
name = "outputs"
repetitions = 3
seed = 11
max_iters = 200
[problem]
recipe = "kl_inverse"
m = 8
n = 12
[[solver]]
id = "BregFW"
[[solver]]
id = "EucFW"
[[solver]]
id = "MD"
[[solver]]
id = "ProjGD"
label = "short"
step = 0.05
"#,
    )
    .unwrap();
    c.output_dir = dir.to_path_buf();
    c.parallel = parallel;
    c
}

fn strip_time(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |p| p.0))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn csv_traces_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = config(a.path(), true);
    let cb = config(b.path(), false);
    let oa = run_experiment(&ca);
    for r in &oa.runs {
        if let Err(e) = &r.result {
            panic!("{} rep {}: {e}", r.label, r.repetition);
        }
    }
    let pa = write_outputs(&ca, &oa).unwrap();
    let pb = write_outputs(&cb, &run_experiment(&cb)).unwrap();
    assert_eq!(pa.len(), 12);
    for (x, y) in pa.iter().zip(&pb) {
        let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
        assert_eq!(x.file_name(), y.file_name());
        let tx = fs::read_to_string(x).unwrap();
        let ty = fs::read_to_string(y).unwrap();
        assert_eq!(strip_time(&tx), strip_time(&ty), "{}", x.display());
    }
}

#[test]
fn summary_matches_statistics_recomputed_from_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), true);
    let out = run_experiment(&cfg);
    let paths = write_outputs(&cfg, &out).unwrap();
    let close =
        |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs()) || (a.is_nan() && b.is_nan());
    for row in &out.summary.rows {
        let mut primal = Vec::new();
        let mut fw = Vec::new();
        for (run, path) in out.runs.iter().zip(&paths) {
            if run.label != row.label {
                continue;
            }
            let records = read_traces(path.as_ref().unwrap()).unwrap();
            let last = records.last().unwrap();
            let f_star = out.summary.repetitions[run.repetition].f_star.unwrap();
            primal.push(last.primal - f_star);
            fw.push(last.fw_gap);
        }
        let (p, f) = (Stats::of(&primal), Stats::of(&fw));
        for (got, want) in [
            (row.primal_gap.mean, p.mean),
            (row.primal_gap.std, p.std),
            (row.primal_gap.median, p.median),
            (row.fw_gap.mean, f.mean),
            (row.fw_gap.std, f.std),
            (row.fw_gap.median, f.median),
        ] {
            assert!(close(got, want), "{}: {got} vs {want}", row.label);
        }
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(json["summary"]["rows"].as_array().unwrap().len(), 4);
    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(csv.lines().nth(4).unwrap().starts_with("short,"));
}
