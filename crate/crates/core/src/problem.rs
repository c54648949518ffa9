//! Problem bundles, solver configuration and run records.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasible::Region;
use crate::kernels::Kernel;
use crate::objectives::Objective;
use crate::par;
use crate::point::DensePoint;
use crate::stepsize::StepRule;

/// Optional problem constants. Rules that need a missing constant fail fast.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub smad_l: Option<f64>,
    pub nu: Option<f64>,
    pub heb_mu: Option<f64>,
    pub heb_q: Option<f64>,
    pub weak_rho: Option<f64>,
    pub interior_radius_r: Option<f64>,
    pub pyramidal_width_delta: Option<f64>,
    pub f_star: Option<f64>,
}

impl TheoryConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::InvalidConstant(format!(
                "{name} must be positive, got {x}"
            ))),
            _ => Ok(()),
        };
        positive("smad_L", self.smad_l)?;
        positive("heb_mu", self.heb_mu)?;
        positive("interior_radius_r", self.interior_radius_r)?;
        positive("pyramidal_width_delta", self.pyramidal_width_delta)?;
        if let Some(nu) = self.nu {
            if !(nu > 0.0 && nu <= 1.0) {
                return Err(Error::InvalidConstant(format!(
                    "nu must lie in (0, 1], got {nu}"
                )));
            }
        }
        if let Some(q) = self.heb_q {
            if !(q >= 1.0) {
                return Err(Error::InvalidConstant(format!(
                    "heb_q must be >= 1, got {q}"
                )));
            }
        }
        if let Some(rho) = self.weak_rho {
            if !(rho >= 0.0) {
                return Err(Error::InvalidConstant(format!(
                    "weak_rho must be >= 0, got {rho}"
                )));
            }
        }
        if let Some(f) = self.f_star {
            if !f.is_finite() {
                return Err(Error::InvalidConstant("f_star must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub objective: Arc<Objective>,
    pub kernel: Kernel,
    pub region: Region,
    pub constants: TheoryConstants,
}

/// Number of boundary and interior points sampled by [`make_problem`].
const VALIDATION_SAMPLES: usize = 32;

/// Validates and bundles a problem.
///
/// Vertices (or boundary samples) and interior samples of the region must have
/// finite `phi` and finite `f`; interior samples must also admit `grad phi`.
pub fn make_problem(
    objective: Objective,
    kernel: Kernel,
    region: Region,
    constants: TheoryConstants,
) -> Result<ProblemInstance> {
    region.validate()?;
    constants.validate()?;
    let shape = region.shape();
    if objective.input_shape() != shape {
        return Err(Error::ShapeMismatch {
            expected: objective.input_shape(),
            got: shape,
        });
    }

    let mut rng = par::stream_rng(0x5eed, 0);
    let mut boundary = match region.enumerate_vertices() {
        Ok(vs) if vs.len() <= 4 * VALIDATION_SAMPLES => vs,
        _ => region.boundary_samples(&mut rng, VALIDATION_SAMPLES),
    };
    let interior: Vec<DensePoint> = (0..VALIDATION_SAMPLES)
        .map(|_| region.sample_interior(&mut rng))
        .collect();

    for x in boundary.iter().chain(&interior) {
        let phi = kernel
            .value(x)
            .map_err(|e| Error::DomainMismatch(format!("kernel {}: {e}", kernel.id())))?;
        if !phi.is_finite() {
            return Err(Error::DomainMismatch(format!(
                "kernel {} is infinite at feasible point {:?}",
                kernel.id(),
                x.data()
            )));
        }
    }
    for x in &interior {
        kernel.gradient(x).map_err(|e| {
            Error::DomainMismatch(format!("kernel {} gradient undefined: {e}", kernel.id()))
        })?;
    }
    boundary.extend(interior);
    for x in &boundary {
        let f = objective
            .value(x)
            .map_err(|e| Error::DomainMismatch(format!("objective {}: {e}", objective.id())))?;
        if !f.is_finite() {
            return Err(Error::DomainMismatch(format!(
                "objective {} is not finite on the region",
                objective.id()
            )));
        }
    }

    Ok(ProblemInstance {
        objective: Arc::new(objective),
        kernel,
        region,
        constants,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub max_iters: usize,
    pub fw_gap_tolerance: f64,
    pub step_rule: StepRule,
    pub rng_seed: u64,
    /// Keep every `record_every`-th iterate plus the final one.
    pub record_every: usize,
    pub wall_clock_limit_seconds: Option<f64>,
}

impl SolveConfig {
    pub fn new(step_rule: StepRule) -> Self {
        Self {
            max_iters: 1000,
            fw_gap_tolerance: 1e-7,
            step_rule,
            rng_seed: 1234,
            record_every: 1,
            wall_clock_limit_seconds: None,
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.fw_gap_tolerance = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.record_every == 0 {
            return Err(Error::InvalidConstant(
                "max_iters and record_every must be positive".into(),
            ));
        }
        if !(self.fw_gap_tolerance >= 0.0) {
            return Err(Error::InvalidConstant(
                "fw_gap_tolerance must be >= 0".into(),
            ));
        }
        if let Some(w) = self.wall_clock_limit_seconds {
            if !(w > 0.0) {
                return Err(Error::InvalidConstant(
                    "wall clock limit must be positive".into(),
                ));
            }
        }
        self.step_rule.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    FW,
    Away,
    Drop,
}

impl std::fmt::Display for StepKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StepKind::FW => "FW",
            StepKind::Away => "Away",
            StepKind::Drop => "Drop",
        })
    }
}

/// State at iterate `x_t` and the step taken from it.
///
/// The terminal record carries `gamma = 0`. `L_t` and `nu_t` are the step
/// rule's smoothness estimates; rules without one leave them empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub primal: f64,
    pub fw_gap: f64,
    pub gamma: f64,
    pub step_kind: StepKind,
    #[serde(rename = "L_t")]
    pub l_t: Option<f64>,
    pub nu_t: Option<f64>,
    pub inner_evals: usize,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GapTolerance,
    MaxIters,
    WallClock,
    LineSearchDiverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub records: Vec<IterationRecord>,
    pub final_x: DensePoint,
    pub termination: Termination,
    pub total_inner_evals: usize,
}

impl RunResult {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("run results are never empty")
    }

    pub fn min_fw_gap(&self) -> f64 {
        self.records
            .iter()
            .fold(f64::INFINITY, |m, r| m.min(r.fw_gap))
    }
}
