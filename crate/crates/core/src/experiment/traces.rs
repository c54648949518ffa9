//! Iteration traces as CSV or JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::TraceFormat;
use crate::error::{Error, Result};
use crate::problem::{IterationRecord, StepKind};

pub const CSV_HEADER: &str = "t,primal,fw_gap,gamma,step_kind,L_t,nu_t,inner_evals,elapsed_seconds";

/// `{:.16e}` keeps 17 significant digits, enough to round-trip any `f64`.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

pub fn traces_to_csv(records: &[IterationRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            float(r.primal),
            float(r.fw_gap),
            float(r.gamma),
            r.step_kind,
            opt(r.l_t),
            opt(r.nu_t),
            r.inner_evals,
            float(r.elapsed_seconds)
        );
    }
    s
}

pub fn traces_to_json(records: &[IterationRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records always serialize")
}

/// Writes `records` to `path`, creating parent directories as needed.
pub fn emit_traces(records: &[IterationRecord], format: TraceFormat, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let body = match format {
        TraceFormat::Csv => traces_to_csv(records),
        TraceFormat::Json => traces_to_json(records),
    };
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Reads a trace written by [`emit_traces`]; the format follows the extension.
pub fn read_traces(path: &Path) -> Result<Vec<IterationRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        return serde_json::from_str(&text).map_err(|e| Error::io(path, e));
    }
    parse_csv(&text).map_err(|e| Error::io(path, e))
}

fn parse_csv(text: &str) -> std::result::Result<Vec<IterationRecord>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("unexpected CSV header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| format!("row {}: bad {what}", i + 1);
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 9 {
                return Err(bad("column count"));
            }
            let f = |j: usize, what: &str| c[j].parse::<f64>().map_err(|_| bad(what));
            let o = |j: usize, what: &str| {
                if c[j].is_empty() {
                    Ok(None)
                } else {
                    c[j].parse::<f64>().map(Some).map_err(|_| bad(what))
                }
            };
            Ok(IterationRecord {
                t: c[0].parse().map_err(|_| bad("t"))?,
                primal: f(1, "primal")?,
                fw_gap: f(2, "fw_gap")?,
                gamma: f(3, "gamma")?,
                step_kind: match c[4] {
                    "FW" => StepKind::FW,
                    "Away" => StepKind::Away,
                    "Drop" => StepKind::Drop,
                    _ => return Err(bad("step_kind")),
                },
                l_t: o(5, "L_t")?,
                nu_t: o(6, "nu_t")?,
                inner_evals: c[7].parse().map_err(|_| bad("inner_evals"))?,
                elapsed_seconds: f(8, "elapsed_seconds")?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: usize) -> IterationRecord {
        IterationRecord {
            t,
            primal: 0.1 + 0.2,
            fw_gap: 1.0 / 3.0,
            gamma: 2.0 / (t as f64 + 2.0),
            step_kind: StepKind::Away,
            l_t: Some(std::f64::consts::E),
            nu_t: None,
            inner_evals: 2,
            elapsed_seconds: 1e-7,
        }
    }

    #[test]
    fn one_record_gives_two_lines() {
        let csv = traces_to_csv(&[rec(0)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1].split(',').count(), 9);
        assert!(!csv.contains('"'));
    }

    #[test]
    fn both_formats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<_> = (0..5).map(rec).collect();
        for (fmt, name) in [
            (TraceFormat::Csv, "a.csv"),
            (TraceFormat::Json, "sub/a.json"),
        ] {
            let p = dir.path().join(name);
            emit_traces(&records, fmt, &p).unwrap();
            assert_eq!(read_traces(&p).unwrap(), records);
        }
    }
}
