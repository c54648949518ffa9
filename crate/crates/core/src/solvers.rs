//! Frank-Wolfe, away-step Frank-Wolfe, mirror descent and projected gradient.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasible::Region;
use crate::kernels::Kernel;
use crate::point::DensePoint;
use crate::problem::{
    IterationRecord, ProblemInstance, RunResult, SolveConfig, StepKind, Termination,
};
use crate::stepsize::{compute_step, StepInput, StepOutcome, GAMMA_MAX_CAP};

/// Feasibility tolerance for starting points and recorded iterates.
pub const FEAS_TOL: f64 = 1e-9;

/// Weights at or below this magnitude after an away step are dropped.
pub const DROP_TOL: f64 = 1e-12;

/// Frank-Wolfe gap `<grad f(x), x - v>` and the oracle vertex `v`.
pub fn fw_gap(problem: &ProblemInstance, x: &DensePoint) -> Result<(f64, DensePoint)> {
    let g = problem.objective.gradient(x)?;
    let v = problem.region.lmo(&g)?;
    Ok((g.dot(&x.sub(&v)), v))
}

struct Recorder {
    records: Vec<IterationRecord>,
    every: usize,
    start: Instant,
    limit: Option<f64>,
    total_inner: usize,
}

impl Recorder {
    fn new(config: &SolveConfig) -> Self {
        Self {
            records: Vec::new(),
            every: config.record_every,
            start: Instant::now(),
            limit: config.wall_clock_limit_seconds,
            total_inner: 0,
        }
    }

    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn out_of_time(&self) -> bool {
        self.limit.is_some_and(|l| self.elapsed() >= l)
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        t: usize,
        primal: f64,
        fw_gap: f64,
        gamma: f64,
        step_kind: StepKind,
        outcome: Option<&StepOutcome>,
        terminal: bool,
    ) {
        let inner = outcome.map_or(0, |o| o.inner_evals);
        self.total_inner += inner;
        if terminal || t.is_multiple_of(self.every) {
            self.records.push(IterationRecord {
                t,
                primal,
                fw_gap,
                gamma,
                step_kind,
                l_t: outcome.and_then(|o| o.l_star),
                nu_t: outcome.and_then(|o| o.nu_star),
                inner_evals: inner,
                elapsed_seconds: self.elapsed(),
            });
        }
    }

    fn finish(self, final_x: DensePoint, termination: Termination) -> RunResult {
        RunResult {
            records: self.records,
            final_x,
            termination,
            total_inner_evals: self.total_inner,
        }
    }
}

/// Decides whether the loop stops at iterate `t` before taking a step.
fn stop_reason(t: usize, gap: f64, config: &SolveConfig, rec: &Recorder) -> Option<Termination> {
    if gap <= config.fw_gap_tolerance {
        Some(Termination::GapTolerance)
    } else if t >= config.max_iters {
        Some(Termination::MaxIters)
    } else if rec.out_of_time() {
        Some(Termination::WallClock)
    } else {
        None
    }
}

fn check_start(
    problem: &ProblemInstance,
    x0: &DensePoint,
    need_kernel_interior: bool,
) -> Result<()> {
    let shape = problem.region.shape();
    if x0.shape() != shape.as_slice() {
        return Err(Error::ShapeMismatch {
            expected: shape,
            got: x0.shape().to_vec(),
        });
    }
    if !x0.is_finite() || !problem.region.contains(x0, FEAS_TOL) {
        return Err(Error::InfeasibleStart(
            "x0 is not in the feasible region".into(),
        ));
    }
    if need_kernel_interior && !problem.kernel.in_interior(x0) {
        return Err(Error::InfeasibleStart(format!(
            "x0 is not interior to the {} kernel domain",
            problem.kernel.id()
        )));
    }
    Ok(())
}

/// Frank-Wolfe: `x_{t+1} = (1 - gamma_t) x_t + gamma_t v_t`, with `v_t` the
/// oracle answer for `grad f(x_t)` and `gamma_t` from the configured rule.
///
/// One record per visited iterate; the final record has `gamma = 0`.
pub fn fw_run(
    problem: &ProblemInstance,
    config: &SolveConfig,
    x0: &DensePoint,
) -> Result<RunResult> {
    config.validate()?;
    check_start(problem, x0, true)?;
    let f = problem.objective.as_ref();
    let mut rec = Recorder::new(config);
    let mut x = x0.clone();
    let mut l_prev: Option<f64> = None;
    let mut t = 0;
    loop {
        let f_x = f.value(&x)?;
        let g = f.gradient(&x)?;
        let v = problem.region.lmo(&g)?;
        let d = x.sub(&v);
        let gap = g.dot(&d);
        if let Some(reason) = stop_reason(t, gap, config, &rec) {
            rec.push(t, f_x, gap, 0.0, StepKind::FW, None, true);
            return Ok(rec.finish(x, reason));
        }
        let input = StepInput {
            objective: f,
            kernel: &problem.kernel,
            x: &x,
            f_x,
            grad: &g,
            d: &d,
            v: &v,
            gap,
            gamma_max: 1.0,
            t,
        };
        let out = match compute_step(&config.step_rule, &input, l_prev) {
            Ok(o) => o,
            Err(Error::LineSearchDiverged(n)) => {
                rec.total_inner += n;
                rec.push(t, f_x, gap, 0.0, StepKind::FW, None, true);
                return Ok(rec.finish(x, Termination::LineSearchDiverged));
            }
            Err(e) => return Err(e),
        };
        if out.l_star.is_some() && config.step_rule.adaptive_params().is_some() {
            l_prev = out.l_star;
        }
        rec.push(t, f_x, gap, out.gamma, StepKind::FW, Some(&out), false);
        x = if out.gamma == 1.0 {
            v
        } else {
            x.step_along(&d, out.gamma)
        };
        t += 1;
    }
}

/// Convex-combination bookkeeping for away-step Frank-Wolfe.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    atoms: Vec<(DensePoint, f64)>,
}

impl ActiveSet {
    pub fn singleton(v: DensePoint) -> Self {
        Self {
            atoms: vec![(v, 1.0)],
        }
    }

    pub fn atoms(&self) -> &[(DensePoint, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// `sum_v lambda_v v`
    pub fn combination(&self) -> DensePoint {
        let mut x = DensePoint::zeros(self.atoms[0].0.shape());
        for (v, w) in &self.atoms {
            x.axpy(*w, v);
        }
        x
    }

    fn position(&self, v: &DensePoint) -> Option<usize> {
        self.atoms.iter().position(|(u, _)| u.bit_eq(v))
    }

    /// Atom maximizing `<g, v>`; ties go to the earliest atom.
    fn away_atom(&self, g: &DensePoint) -> (usize, f64) {
        let mut best = 0;
        let mut best_val = g.dot(&self.atoms[0].0);
        for (i, (v, _)) in self.atoms.iter().enumerate().skip(1) {
            let val = g.dot(v);
            if val > best_val {
                best = i;
                best_val = val;
            }
        }
        (best, best_val)
    }

    /// Returns true when `v` was not yet an atom.
    fn fw_update(&mut self, v: &DensePoint, gamma: f64) -> bool {
        if gamma >= 1.0 {
            self.atoms = vec![(v.clone(), 1.0)];
            return false;
        }
        for a in &mut self.atoms {
            a.1 *= 1.0 - gamma;
        }
        match self.position(v) {
            Some(i) => {
                self.atoms[i].1 += gamma;
                false
            }
            None => {
                self.atoms.push((v.clone(), gamma));
                true
            }
        }
    }

    /// Returns true when the away atom was dropped.
    fn away_update(&mut self, index: usize, gamma: f64, gamma_max: f64) -> bool {
        for a in &mut self.atoms {
            a.1 *= 1.0 + gamma;
        }
        self.atoms[index].1 -= gamma;
        if gamma == gamma_max || self.atoms[index].1.abs() <= DROP_TOL {
            self.atoms.remove(index);
            true
        } else {
            false
        }
    }

    fn renormalize(&mut self) {
        let s = self.weight_sum();
        if (s - 1.0).abs() > 1e-12 {
            for a in &mut self.atoms {
                a.1 /= s;
            }
        }
    }
}

/// Per-iteration view handed to [`afw_run_observed`] after each update.
#[derive(Debug)]
pub struct AfwEvent<'a> {
    pub t: usize,
    pub kind: StepKind,
    pub gamma: f64,
    pub gamma_max: f64,
    pub fw_gap: f64,
    pub away_gap: f64,
    /// Iterate the step was taken from.
    pub x_prev: &'a DensePoint,
    pub x: &'a DensePoint,
    pub active: &'a ActiveSet,
    pub atoms_before: usize,
    /// A full step onto the Frank-Wolfe vertex collapsed the set to one atom.
    pub reset: bool,
    pub adds: usize,
    pub drops: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AfwCounters {
    pub adds: usize,
    pub drops: usize,
    pub away_steps: usize,
    pub resets: usize,
    /// Away steps selected with a single atom and forced onto the FW branch.
    pub singleton_away: usize,
}

pub fn afw_run(
    problem: &ProblemInstance,
    config: &SolveConfig,
    x0: &DensePoint,
) -> Result<RunResult> {
    afw_run_observed(problem, config, x0, |_| {}).map(|(r, _)| r)
}

/// Away-step Frank-Wolfe from the vertex `x0`, calling `observer` after every step.
///
/// The Frank-Wolfe direction is taken when its gap is at least the away gap.
pub fn afw_run_observed<F>(
    problem: &ProblemInstance,
    config: &SolveConfig,
    x0: &DensePoint,
    mut observer: F,
) -> Result<(RunResult, AfwCounters)>
where
    F: FnMut(&AfwEvent<'_>),
{
    config.validate()?;
    if !problem.region.is_polytope() {
        return Err(Error::Unsupported(format!(
            "away steps need a polytope, got {}",
            problem.region.kind_name()
        )));
    }
    check_start(problem, x0, false)?;
    let f = problem.objective.as_ref();
    let mut rec = Recorder::new(config);
    let mut counters = AfwCounters::default();
    let mut active = ActiveSet::singleton(x0.clone());
    let mut x = x0.clone();
    let mut l_prev: Option<f64> = None;
    let mut t = 0;
    loop {
        let f_x = f.value(&x)?;
        let g = f.gradient(&x)?;
        let v_fw = problem.region.lmo(&g)?;
        let gx = g.dot(&x);
        let gap_fw = gx - g.dot(&v_fw);
        if let Some(reason) = stop_reason(t, gap_fw, config, &rec) {
            rec.push(t, f_x, gap_fw, 0.0, StepKind::FW, None, true);
            return Ok((rec.finish(x, reason), counters));
        }
        let (away_idx, away_val) = active.away_atom(&g);
        let away_gap = away_val - gx;
        let mut use_fw = gap_fw >= away_gap;
        if !use_fw && active.len() == 1 {
            counters.singleton_away += 1;
            use_fw = true;
        }
        let (d, v, gamma_max) = if use_fw {
            (x.sub(&v_fw), v_fw.clone(), 1.0)
        } else {
            let (va, lambda) = &active.atoms()[away_idx];
            let gmax = (lambda / (1.0 - lambda)).min(GAMMA_MAX_CAP);
            (va.sub(&x), va.clone(), gmax)
        };
        let gap = g.dot(&d);
        let input = StepInput {
            objective: f,
            kernel: &problem.kernel,
            x: &x,
            f_x,
            grad: &g,
            d: &d,
            v: &v,
            gap,
            gamma_max,
            t,
        };
        let out = match compute_step(&config.step_rule, &input, l_prev) {
            Ok(o) => o,
            Err(Error::LineSearchDiverged(n)) => {
                rec.total_inner += n;
                rec.push(t, f_x, gap_fw, 0.0, StepKind::FW, None, true);
                return Ok((rec.finish(x, Termination::LineSearchDiverged), counters));
            }
            Err(e) => return Err(e),
        };
        if config.step_rule.adaptive_params().is_some() {
            l_prev = out.l_star;
        }
        let gamma = out.gamma;
        let atoms_before = active.len();
        let mut reset = false;
        let kind = if use_fw {
            if gamma > 0.0 {
                reset = gamma >= 1.0;
                if reset {
                    counters.resets += 1;
                }
                if active.fw_update(&v_fw, gamma) {
                    counters.adds += 1;
                }
            }
            StepKind::FW
        } else {
            counters.away_steps += 1;
            if gamma > 0.0 && active.away_update(away_idx, gamma, gamma_max) {
                counters.drops += 1;
                StepKind::Drop
            } else {
                StepKind::Away
            }
        };
        active.renormalize();
        rec.push(t, f_x, gap_fw, gamma, kind, Some(&out), false);

        let x_prev = x;
        x = if reset {
            v_fw
        } else {
            x_prev.step_along(&d, gamma)
        };
        let recon = active.combination();
        if x.max_abs_diff(&recon) > 1e-12 {
            x = recon;
        }
        observer(&AfwEvent {
            t,
            kind,
            gamma,
            gamma_max,
            fw_gap: gap_fw,
            away_gap,
            x_prev: &x_prev,
            x: &x,
            active: &active,
            atoms_before,
            reset,
            adds: counters.adds,
            drops: counters.drops,
        });
        t += 1;
    }
}

/// Step-size schedule for the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSchedule {
    Constant {
        value: f64,
    },
    /// `value / sqrt(t + 1)`
    InvSqrt {
        value: f64,
    },
}

impl GammaSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            GammaSchedule::Constant { value } => *value,
            GammaSchedule::InvSqrt { value } => value / (t as f64 + 1.0).sqrt(),
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match self {
            GammaSchedule::Constant { value } | GammaSchedule::InvSqrt { value } => *value,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidConstant(format!(
                "step size must be positive, got {v}"
            )));
        }
        Ok(())
    }
}

/// One entropic mirror step on `{x >= 0, sum x <= 1}`:
/// `y = x exp(-gamma g)`, rescaled to sum one only when the cap is violated.
pub fn mirror_step(x: &DensePoint, g: &DensePoint, gamma: f64) -> DensePoint {
    let mut y: Vec<f64> = x
        .data()
        .iter()
        .zip(g.data())
        .map(|(xi, gi)| xi * (-gamma * gi).exp())
        .collect();
    let s: f64 = y.iter().sum();
    if s > 1.0 {
        for v in &mut y {
            *v /= s;
        }
    }
    DensePoint::from_parts(y, x.shape().to_vec())
}

/// Entropic mirror descent on the simplex `{x >= 0, sum x <= 1}`.
pub fn mirror_descent_run(
    problem: &ProblemInstance,
    schedule: &GammaSchedule,
    config: &SolveConfig,
    x0: &DensePoint,
) -> Result<RunResult> {
    if !matches!(problem.kernel, Kernel::Entropy) {
        return Err(Error::KernelMismatch(format!(
            "mirror descent needs the entropy kernel, got {}",
            problem.kernel.id()
        )));
    }
    if !matches!(problem.region, Region::SimplexLeqOne { .. }) {
        return Err(Error::Unsupported(format!(
            "mirror descent is implemented for the simplex, got {}",
            problem.region.kind_name()
        )));
    }
    schedule.validate()?;
    config.validate()?;
    check_start(problem, x0, true)?;
    baseline_loop(
        problem,
        config,
        x0,
        |x, g, t| Ok(mirror_step(x, g, schedule.at(t))),
        |t| schedule.at(t),
    )
}

/// Projected gradient `x_{t+1} = P(x_t - step grad f(x_t))`.
pub fn projected_gradient_run(
    problem: &ProblemInstance,
    step: f64,
    config: &SolveConfig,
    x0: &DensePoint,
) -> Result<RunResult> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidConstant(format!(
            "step must be positive, got {step}"
        )));
    }
    config.validate()?;
    check_start(problem, x0, false)?;
    problem.region.project(x0)?;
    baseline_loop(
        problem,
        config,
        x0,
        |x, g, _| problem.region.project(&x.step_along(g, step)),
        |_| step,
    )
}

fn baseline_loop<U, S>(
    problem: &ProblemInstance,
    config: &SolveConfig,
    x0: &DensePoint,
    update: U,
    step_size: S,
) -> Result<RunResult>
where
    U: Fn(&DensePoint, &DensePoint, usize) -> Result<DensePoint>,
    S: Fn(usize) -> f64,
{
    let f = problem.objective.as_ref();
    let mut rec = Recorder::new(config);
    let mut x = x0.clone();
    let mut t = 0;
    loop {
        let f_x = f.value(&x)?;
        let g = f.gradient(&x)?;
        let v = problem.region.lmo(&g)?;
        let gap = g.dot(&x.sub(&v));
        if let Some(reason) = stop_reason(t, gap, config, &rec) {
            rec.push(t, f_x, gap, 0.0, StepKind::FW, None, true);
            return Ok(rec.finish(x, reason));
        }
        rec.push(t, f_x, gap, step_size(t), StepKind::FW, None, false);
        x = update(&x, &g, t)?;
        t += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::Objective;
    use crate::problem::{make_problem, TheoryConstants};
    use crate::stepsize::StepRule;

    fn v(x: &[f64]) -> DensePoint {
        DensePoint::vector(x.to_vec())
    }

    fn diag_quadratic(diag: &[f64], c: &[f64], constant: f64) -> Objective {
        let n = diag.len();
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            q[i * n + i] = diag[i];
        }
        Objective::quadratic(DensePoint::matrix(n, n, q), c.to_vec(), constant).unwrap()
    }

    fn problem(f: Objective, kernel: Kernel, region: Region) -> ProblemInstance {
        make_problem(f, kernel, region, TheoryConstants::default()).unwrap()
    }

    fn box1(n: usize) -> Region {
        Region::Box {
            lower: vec![-1.0; n],
            upper: vec![1.0; n],
        }
    }

    #[test]
    fn short_step_hand_trace() {
        // gap = 2, D(v, x) = 2, so gamma = 2 / (L * 2 * 2).
        let p = problem(
            diag_quadratic(&[1.0], &[0.0], 0.0),
            Kernel::Euclidean,
            box1(1),
        );
        let cfg = SolveConfig::new(StepRule::BregmanShort { l: 1.0, nu: 1.0 }).with_max_iters(1);
        let r = fw_run(&p, &cfg, &v(&[1.0])).unwrap();
        assert_eq!(r.records[0].gamma, 0.5);
        assert_eq!(r.final_x, v(&[0.0]));

        let cfg = SolveConfig::new(StepRule::BregmanShort { l: 2.0, nu: 1.0 }).with_max_iters(1);
        let r = fw_run(&p, &cfg, &v(&[1.0])).unwrap();
        assert_eq!(r.records[0].gamma, 0.25);
        assert_eq!(r.final_x, v(&[0.5]));
    }

    #[test]
    fn open_loop_first_step_lands_on_vertex() {
        let p = problem(
            diag_quadratic(&[1.0, 1.0], &[-0.3, 0.2], 0.0),
            Kernel::Euclidean,
            box1(2),
        );
        let cfg = SolveConfig::new(StepRule::OpenLoop).with_max_iters(1);
        let r = fw_run(&p, &cfg, &v(&[0.5, -0.5])).unwrap();
        let (_, v0) = fw_gap(&p, &v(&[0.5, -0.5])).unwrap();
        assert_eq!(r.final_x, v0);
        assert_eq!(r.records.len(), 2);
        assert_eq!(r.termination, Termination::MaxIters);
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let p = problem(
            diag_quadratic(&[1.0, 1.0], &[0.0, 0.0], 0.0),
            Kernel::Euclidean,
            box1(2),
        );
        let r = fw_run(&p, &SolveConfig::new(StepRule::OpenLoop), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.termination, Termination::GapTolerance);
    }

    #[test]
    fn fw_gap_examples() {
        let p = problem(
            diag_quadratic(&[1.0, 1.0], &[0.0, 0.0], 0.0),
            Kernel::Euclidean,
            box1(2),
        );
        assert_eq!(fw_gap(&p, &v(&[0.0, 0.0])).unwrap().0, 0.0);
        let (gap, vert) = fw_gap(&p, &v(&[1.0, 1.0])).unwrap();
        assert_eq!(gap, 4.0);
        assert_eq!(vert, v(&[-1.0, -1.0]));
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let p = problem(
            diag_quadratic(&[1.0], &[0.0], 0.0),
            Kernel::Euclidean,
            box1(1),
        );
        let r = fw_run(&p, &SolveConfig::new(StepRule::OpenLoop), &v(&[2.0]));
        assert!(matches!(r, Err(Error::InfeasibleStart(_))));
    }

    #[test]
    fn afw_recovers_face_optimum() {
        // ||x - (0.25, 0)||^2 = x^T x - 0.5 x_1 + 1/16
        let f = diag_quadratic(&[2.0, 2.0], &[-0.5, 0.0], 0.0625);
        let p = problem(f, Kernel::Euclidean, Region::SimplexLeqOne { n: 2 });
        let cfg = SolveConfig::new(StepRule::adaptive())
            .with_max_iters(500)
            .with_tolerance(1e-12);
        let mut first_kind = None;
        let (r, _) = afw_run_observed(&p, &cfg, &v(&[1.0, 0.0]), |e| {
            first_kind.get_or_insert(e.kind);
        })
        .unwrap();
        assert_eq!(first_kind, Some(StepKind::FW));
        assert!(r.final_x.max_abs_diff(&v(&[0.25, 0.0])) < 1e-6);
    }

    #[test]
    fn mirror_step_examples() {
        let x = v(&[0.5, 0.5]);
        assert_eq!(mirror_step(&x, &v(&[0.0, 0.0]), 1.0), x);
        let y = mirror_step(&x, &v(&[2f64.ln(), 0.0]), 1.0);
        assert!((y.data()[0] - 0.25).abs() < 1e-15 && y.data()[1] == 0.5);
        let y = mirror_step(&x, &v(&[-5.0, -5.0]), 1.0);
        assert!((y.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mirror_descent_needs_entropy() {
        let p = problem(
            diag_quadratic(&[1.0, 1.0], &[0.0, 0.0], 0.0),
            Kernel::Euclidean,
            Region::SimplexLeqOne { n: 2 },
        );
        let r = mirror_descent_run(
            &p,
            &GammaSchedule::Constant { value: 1.0 },
            &SolveConfig::new(StepRule::OpenLoop),
            &v(&[0.2, 0.2]),
        );
        assert!(matches!(r, Err(Error::KernelMismatch(_))));
    }

    #[test]
    fn projected_gradient_unsupported_region() {
        let p = problem(
            diag_quadratic(&[1.0, 1.0], &[0.0, 0.0], 0.0),
            Kernel::Euclidean,
            Region::KSparse { n: 2, k: 1 },
        );
        let r = projected_gradient_run(
            &p,
            1.0,
            &SolveConfig::new(StepRule::OpenLoop),
            &v(&[0.5, 0.0]),
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }
}
