//! Diagnostics suite for a configured problem: gradient, smoothness, scaling
//! exponent, oracle and per-solver trace checks, reported as verdicts.

use serde::Serialize;
use serde_json::json;

use super::config::{ExperimentConfig, SolverId};
use super::run::{build_dataset, run_solver};
use crate::diagnostics::{
    audit_linesearch_budget, check_descent_lemma, check_sublinear_convex, flag_nonconvergence,
    gradient_fd_check, lmo_audit,
};
use crate::error::Result;
use crate::feasible::{bregman_diameter_sq, VERTEX_CAP};
use crate::kernels::estimate_nu;
use crate::objectives::ObjectiveId;
use crate::par::stream_rng;
use crate::problem::make_problem;

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub check: String,
    /// `None` for informational entries.
    pub passed: Option<bool>,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub data_seed: u64,
    pub verdicts: Vec<Verdict>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed != Some(false))
    }
}

const FD_TOL: f64 = 1e-5;
const FD_POINTS: usize = 20;
const DESCENT_PAIRS: usize = 1000;
const NU_PAIRS: usize = 200;
const LMO_DIRECTIONS: usize = 200;

fn verdict(check: &str, passed: Option<bool>, detail: serde_json::Value) -> Verdict {
    Verdict {
        check: check.to_string(),
        passed,
        detail,
    }
}

/// Runs the diagnostics on the first repetition of `config`.
pub fn check_problem(config: &ExperimentConfig) -> Result<CheckReport> {
    let ds = build_dataset(config, 0)?;
    let problem = make_problem(
        ds.objective.clone(),
        ds.kernel.clone(),
        ds.region.clone(),
        ds.constants,
    )?;
    let seed = config.data_seed(0);
    let mut verdicts = Vec::new();

    let mut rng = stream_rng(seed, 0xc4ec);
    let mut worst: f64 = 0.0;
    for _ in 0..FD_POINTS {
        let x = ds.region.sample_interior(&mut rng);
        worst = worst.max(gradient_fd_check(&ds.objective, &x)?);
    }
    verdicts.push(verdict(
        "gradient_fd",
        Some(worst <= FD_TOL),
        json!({ "points": FD_POINTS, "max_rel_err": worst, "tol": FD_TOL }),
    ));

    match ds.constants.smad_l {
        Some(l) => {
            let d = check_descent_lemma(&ds.objective, &ds.kernel, l, &ds.region, DESCENT_PAIRS, seed)?;
            verdicts.push(verdict(
                "descent_lemma",
                Some(d.violations == 0),
                json!({ "L": l, "kernel": ds.kernel.id().to_string(), "pairs": d.pairs,
                        "violations": d.violations, "worst_ratio": d.worst_ratio }),
            ));
        }
        None => verdicts.push(verdict(
            "descent_lemma",
            None,
            json!({ "skipped": "no smoothness constant for this kernel; adaptive rules estimate it" }),
        )),
    }

    let gammas: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    let nu = estimate_nu(&ds.kernel, &ds.region, NU_PAIRS, &gammas, seed);
    let nu_hat = nu.as_ref().ok().map(|e| e.nu_hat);
    verdicts.push(match nu {
        Ok(e) => verdict(
            "scaling_exponent",
            None,
            json!({ "kernel": ds.kernel.id().to_string(), "nu_hat": e.nu_hat, "pairs": e.pairs_checked }),
        ),
        Err(e) => verdict("scaling_exponent", Some(false), json!({ "error": e.to_string() })),
    });

    let diam = bregman_diameter_sq(&ds.region, &ds.kernel, 256, seed)?;
    verdicts.push(verdict(
        "diameter_sq",
        None,
        json!({ "value": diam.value, "exact": diam.exact }),
    ));

    let small = ds
        .region
        .vertex_count()
        .map_or(true, |c| c <= VERTEX_CAP.min(4096));
    if !ds.region.is_polytope() || small {
        let tol = if ds.region.is_polytope() { 1e-12 } else { 1e-8 };
        let a = lmo_audit(&ds.region, LMO_DIRECTIONS, tol, seed)?;
        verdicts.push(verdict(
            "lmo",
            Some(a.passed()),
            serde_json::to_value(&a).unwrap_or_default(),
        ));
    }

    let convex = matches!(
        ds.objective.id(),
        ObjectiveId::LpLoss | ObjectiveId::KlInverse | ObjectiveId::Quadratic
    );
    for spec in &config.solvers {
        let label = format!("solver:{}", spec.label);
        let run = match run_solver(spec, &problem, &ds.x0, config, seed) {
            Ok(r) => r,
            Err(e) => {
                verdicts.push(verdict(
                    &label,
                    Some(false),
                    json!({ "error": e.to_string() }),
                ));
                continue;
            }
        };
        let mut detail = json!({
            "termination": run.termination,
            "iterations": run.last().t,
            "final_fw_gap": run.last().fw_gap,
            "nonconverged": flag_nonconvergence(&run.records, config.tolerance),
        });
        let mut passed = true;
        if spec.id.is_adaptive() {
            let audit = audit_linesearch_budget(&run.records, &spec.adaptive);
            passed &= audit.violations == 0;
            detail["budget"] = serde_json::to_value(audit).unwrap_or_default();
        }
        if spec.id == SolverId::OpenFW && convex {
            if let (Some(f), Some(l), Some(nu)) = (ds.constants.f_star, ds.constants.smad_l, nu_hat)
            {
                let b = check_sublinear_convex(&run.records, f, l, diam.value, nu)?;
                passed &= b.safe_violations == 0;
                detail["sublinear_bound"] = serde_json::to_value(b).unwrap_or_default();
            }
        }
        verdicts.push(verdict(&label, Some(passed), detail));
    }

    Ok(CheckReport {
        name: config.name.clone(),
        data_seed: seed,
        verdicts,
    })
}
