//! Batch execution of a configured experiment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{
    ExperimentConfig, KernelChoice, ProblemSource, ScheduleKind, SolverId, SolverSpec, TraceFormat,
};
use super::recipes::{generate_dataset, Dataset};
use super::traces::emit_traces;
use crate::data_io::{read_matrix, read_vector};
use crate::diagnostics::{flag_nonconvergence, median};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::objectives::{Objective, ObjectiveId};
use crate::par::{self, Execution};
use crate::problem::{make_problem, ProblemInstance, RunResult, SolveConfig};
use crate::solvers::{afw_run, fw_run, mirror_descent_run, projected_gradient_run, GammaSchedule};
use crate::stepsize::StepRule;

impl KernelChoice {
    pub fn to_kernel(self, objective: &Objective) -> Kernel {
        match self {
            KernelChoice::Euclidean => Kernel::Euclidean,
            KernelChoice::Entropy => Kernel::Entropy,
            KernelChoice::Burg => Kernel::Burg,
            KernelChoice::Quartic => Kernel::Quartic,
            KernelChoice::QuarticScaled { c } => Kernel::QuarticScaled { c },
            KernelChoice::Objective => Kernel::ObjectiveAsKernel(Arc::new(objective.clone())),
        }
    }
}

impl ExperimentConfig {
    /// Seed of the data for repetition `rep`.
    pub fn data_seed(&self, rep: usize) -> u64 {
        let base = match &self.problem {
            ProblemSource::Recipe { seed: Some(s), .. } => *s,
            _ => self.seed,
        };
        base.wrapping_add(rep as u64)
    }

    fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Builds the dataset of repetition `rep`, applying region and kernel overrides.
pub fn build_dataset(config: &ExperimentConfig, rep: usize) -> Result<Dataset> {
    let seed = config.data_seed(rep);
    let mut ds = match &config.problem {
        ProblemSource::Recipe { name, params, .. } => generate_dataset(name, params, seed)?,
        ProblemSource::File {
            objective,
            files,
            p,
            rank,
        } => {
            let region = config.region.clone().ok_or_else(|| {
                Error::Config(vec!["a file-based problem needs a [region] table".into()])
            })?;
            let file = |role: &str| {
                files
                    .get(role)
                    .ok_or_else(|| Error::Config(vec![format!("missing data file `{role}`")]))
            };
            let obj = match objective {
                ObjectiveId::LpLoss => Objective::lp_loss(
                    read_matrix(file("a")?)?,
                    read_vector(file("b")?)?,
                    p.unwrap_or(1.1),
                )?,
                ObjectiveId::PhaseRetrieval => {
                    Objective::phase_retrieval(read_matrix(file("a")?)?, read_vector(file("b")?)?)?
                }
                ObjectiveId::KlInverse => {
                    Objective::kl_inverse(read_matrix(file("a")?)?, read_vector(file("b")?)?)?
                }
                ObjectiveId::LowRank => {
                    Objective::low_rank(read_matrix(file("m")?)?, rank.unwrap_or(1))?
                }
                ObjectiveId::Nmf => Objective::nmf(read_matrix(file("v")?)?, rank.unwrap_or(1))?,
                ObjectiveId::Quadratic => {
                    Objective::quadratic(read_matrix(file("q")?)?, read_vector(file("c")?)?, 0.0)?
                }
                ObjectiveId::ToyPiecewise => Objective::ToyPiecewise,
                ObjectiveId::ToyLog1pSq => Objective::ToyLog1pSq,
            };
            let (l, kernel) = obj.smad_constant();
            Dataset {
                recipe: "file".into(),
                seed,
                x0: region.default_start(),
                region,
                kernel,
                constants: crate::problem::TheoryConstants {
                    smad_l: l,
                    ..Default::default()
                },
                objective: obj,
                x_star: None,
            }
        }
    };
    if let (Some(region), ProblemSource::Recipe { .. }) = (&config.region, &config.problem) {
        ds = ds.with_region(region.clone())?;
    }
    if let Some(k) = config.kernel {
        let kernel = k.to_kernel(&ds.objective);
        ds = ds.with_kernel(kernel);
    }
    if let Some(f) = config.f_star {
        ds.constants.f_star = Some(f);
    }
    Ok(ds)
}

/// Runs one solver on one problem.
pub fn run_solver(
    spec: &SolverSpec,
    problem: &ProblemInstance,
    x0: &crate::point::DensePoint,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RunResult> {
    let c = &problem.constants;
    let need_l = |what: &str| {
        spec.l.or(c.smad_l).ok_or_else(|| {
            Error::InvalidConstant(format!(
                "{} needs `l` ({what}); the problem has no known constant",
                spec.id
            ))
        })
    };
    let max_iters = spec.max_iters.unwrap_or(config.max_iters);
    let nu = spec.nu.or(c.nu).unwrap_or(1.0);
    let rule = match spec.id {
        SolverId::BregFW | SolverId::BregAFW => StepRule::AdaptiveBregman(spec.adaptive),
        SolverId::EucFW | SolverId::EucAFW => StepRule::EuclideanAdaptive(spec.adaptive),
        SolverId::BregShortFW | SolverId::BregShortAFW => StepRule::BregmanShort {
            l: need_l("smoothness relative to the kernel")?,
            nu,
        },
        SolverId::ShortFW | SolverId::ShortAFW => StepRule::EuclideanShort {
            l: need_l("Euclidean smoothness")?,
        },
        SolverId::OpenFW | SolverId::OpenAFW | SolverId::MD | SolverId::ProjGD => {
            StepRule::OpenLoop
        }
        SolverId::FixedFW => StepRule::FixedNonconvex {
            horizon: max_iters,
            nu,
        },
    };
    let sc = SolveConfig {
        max_iters,
        fw_gap_tolerance: config.tolerance,
        step_rule: rule,
        rng_seed: seed,
        record_every: config.record_every,
        wall_clock_limit_seconds: config.wall_clock_limit_seconds,
    };
    match spec.id {
        SolverId::MD => {
            let value = spec
                .step
                .map_or_else(|| need_l("step defaults to 1/L").map(|l| 1.0 / l), Ok)?;
            let schedule = match spec.schedule {
                ScheduleKind::Constant => GammaSchedule::Constant { value },
                ScheduleKind::InvSqrt => GammaSchedule::InvSqrt { value },
            };
            mirror_descent_run(problem, &schedule, &sc, x0)
        }
        SolverId::ProjGD => {
            let step = spec
                .step
                .map_or_else(|| need_l("step defaults to 1/L").map(|l| 1.0 / l), Ok)?;
            projected_gradient_run(problem, step, &sc, x0)
        }
        id if id.is_away() => {
            let v0 = problem.region.lmo(&problem.objective.gradient(x0)?)?;
            afw_run(problem, &sc, &v0)
        }
        _ => fw_run(problem, &sc, x0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FStarSource {
    /// Given in the configuration.
    Config,
    /// Objective value at the generator's planted solution.
    Generator,
    /// Lowest primal value seen across all solvers of the repetition.
    BestFound,
    /// No run produced a value.
    Unavailable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Repetition {
    pub repetition: usize,
    pub data_seed: u64,
    pub f_star: Option<f64>,
    pub fstar_source: FStarSource,
    /// Set when the problem itself could not be built.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub label: String,
    pub solver: SolverId,
    pub repetition: usize,
    pub seed: u64,
    pub result: std::result::Result<RunResult, String>,
}

impl RunOutcome {
    pub fn trace_file_name(&self, format: TraceFormat) -> String {
        let ext = match format {
            TraceFormat::Csv => "csv",
            TraceFormat::Json => "json",
        };
        format!("{}_rep{}.{ext}", self.label, self.repetition)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub median: f64,
}

impl Stats {
    pub fn of(v: &[f64]) -> Stats {
        if v.is_empty() {
            return Stats {
                mean: f64::NAN,
                std: f64::NAN,
                median: f64::NAN,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stats {
            mean,
            std,
            median: median(v.to_vec()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub solver: SolverId,
    pub runs: usize,
    pub failed: usize,
    /// Runs flagged as not converging.
    pub nonconverged: usize,
    /// Final `f(x) - f*`.
    pub primal_gap: Stats,
    /// Final FW gap.
    pub fw_gap: Stats,
    pub wall_time: Stats,
    pub iterations: Stats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub recipe: String,
    pub repetitions: Vec<Repetition>,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub runs: Vec<RunOutcome>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn run(&self, label: &str, repetition: usize) -> Option<&RunOutcome> {
        self.runs
            .iter()
            .find(|r| r.label == label && r.repetition == repetition)
    }
}

/// Final primal value of each run and the best value seen along its trace.
fn best_primal(r: &RunResult) -> f64 {
    r.records.iter().fold(f64::INFINITY, |m, x| m.min(x.primal))
}

/// Runs every `(solver, repetition)` pair. Individual failures are recorded in
/// the outcome rather than aborting the batch.
pub fn run_experiment(config: &ExperimentConfig) -> ExperimentOutput {
    let exec = config.execution();
    let reps = config.repetitions;
    let datasets: Vec<Result<(Dataset, ProblemInstance)>> = par::map_range(exec, reps, |rep| {
        let ds = build_dataset(config, rep)?;
        let problem = make_problem(
            ds.objective.clone(),
            ds.kernel.clone(),
            ds.region.clone(),
            ds.constants,
        )?;
        Ok((ds, problem))
    });

    let n_solvers = config.solvers.len();
    let runs: Vec<RunOutcome> = par::map_range(exec, reps * n_solvers, |i| {
        let rep = i / n_solvers;
        let spec = &config.solvers[i % n_solvers];
        let seed = config.data_seed(rep);
        let result = match &datasets[rep] {
            Ok((ds, problem)) => {
                run_solver(spec, problem, &ds.x0, config, seed).map_err(|e| e.to_string())
            }
            Err(e) => Err(format!("problem construction failed: {e}")),
        };
        if let Err(e) = &result {
            log::warn!("{} repetition {rep}: {e}", spec.label);
        }
        RunOutcome {
            label: spec.label.clone(),
            solver: spec.id,
            repetition: rep,
            seed,
            result,
        }
    });

    let repetitions: Vec<Repetition> = (0..reps)
        .map(|rep| {
            let (f_star, source, error) = match &datasets[rep] {
                Err(e) => (None, FStarSource::Unavailable, Some(e.to_string())),
                Ok((ds, _)) => {
                    if let Some(f) = config.f_star {
                        (Some(f), FStarSource::Config, None)
                    } else if let Some(f) = ds.constants.f_star {
                        (Some(f), FStarSource::Generator, None)
                    } else {
                        let best = runs
                            .iter()
                            .filter(|r| r.repetition == rep)
                            .filter_map(|r| r.result.as_ref().ok())
                            .map(best_primal)
                            .fold(f64::INFINITY, f64::min);
                        if best.is_finite() {
                            (Some(best), FStarSource::BestFound, None)
                        } else {
                            (None, FStarSource::Unavailable, None)
                        }
                    }
                }
            };
            Repetition {
                repetition: rep,
                data_seed: config.data_seed(rep),
                f_star,
                fstar_source: source,
                error,
            }
        })
        .collect();

    let rows = config
        .solvers
        .iter()
        .map(|spec| summarize(spec, &runs, &repetitions, config.tolerance))
        .collect();
    let recipe = match &config.problem {
        ProblemSource::Recipe { name, .. } => name.clone(),
        ProblemSource::File { objective, .. } => format!("file:{objective}"),
    };
    ExperimentOutput {
        runs,
        summary: Summary {
            name: config.name.clone(),
            recipe,
            repetitions,
            rows,
        },
    }
}

fn summarize(spec: &SolverSpec, runs: &[RunOutcome], reps: &[Repetition], tol: f64) -> SummaryRow {
    let mine: Vec<&RunOutcome> = runs.iter().filter(|r| r.label == spec.label).collect();
    let mut primal = Vec::new();
    let mut gaps = Vec::new();
    let mut times = Vec::new();
    let mut iters = Vec::new();
    let mut failed = 0;
    let mut nonconverged = 0;
    for r in &mine {
        match &r.result {
            Ok(res) => {
                let last = res.last();
                if let Some(f) = reps[r.repetition].f_star {
                    primal.push(last.primal - f);
                }
                gaps.push(last.fw_gap);
                times.push(last.elapsed_seconds);
                iters.push(last.t as f64);
                if flag_nonconvergence(&res.records, tol) {
                    nonconverged += 1;
                }
            }
            Err(_) => failed += 1,
        }
    }
    SummaryRow {
        label: spec.label.clone(),
        solver: spec.id,
        runs: mine.len(),
        failed,
        nonconverged,
        primal_gap: Stats::of(&primal),
        fw_gap: Stats::of(&gaps),
        wall_time: Stats::of(&times),
        iterations: Stats::of(&iters),
    }
}

/// Summary table as CSV, one row per solver.
pub fn summary_csv(summary: &Summary) -> String {
    let mut s = String::from(
        "solver,runs,failed,nonconverged,primal_gap_mean,primal_gap_std,primal_gap_median,\
         fw_gap_mean,fw_gap_std,fw_gap_median,time_mean,time_std,iterations_mean\n",
    );
    for r in &summary.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.label,
            r.runs,
            r.failed,
            r.nonconverged,
            r.primal_gap.mean,
            r.primal_gap.std,
            r.primal_gap.median,
            r.fw_gap.mean,
            r.fw_gap.std,
            r.fw_gap.median,
            r.wall_time.mean,
            r.wall_time.std,
            r.iterations.mean,
        );
    }
    s
}

/// Per-run metadata stored alongside the traces.
#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    label: &'a str,
    solver: SolverId,
    repetition: usize,
    seed: u64,
    trace: Option<String>,
    termination: Option<crate::problem::Termination>,
    total_inner_evals: Option<usize>,
    error: Option<&'a str>,
}

#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    summary: &'a Summary,
    runs: Vec<RunMeta<'a>>,
    config: &'a ExperimentConfig,
}

/// Writes traces under `<output_dir>/traces/`, then `summary.json` and
/// `summary.csv`. Returns the trace paths in run order (failed runs have none).
pub fn write_outputs(
    config: &ExperimentConfig,
    out: &ExperimentOutput,
) -> Result<Vec<Option<PathBuf>>> {
    let dir = &config.output_dir;
    let trace_dir = dir.join("traces");
    fs::create_dir_all(&trace_dir).map_err(|e| Error::io(&trace_dir, e))?;
    let mut paths = Vec::with_capacity(out.runs.len());
    let mut meta = Vec::with_capacity(out.runs.len());
    for r in &out.runs {
        let path = match &r.result {
            Ok(res) => {
                let p = trace_dir.join(r.trace_file_name(config.format));
                emit_traces(&res.records, config.format, &p)?;
                Some(p)
            }
            Err(_) => None,
        };
        meta.push(RunMeta {
            label: &r.label,
            solver: r.solver,
            repetition: r.repetition,
            seed: r.seed,
            trace: path.as_deref().map(relative_to(dir)),
            termination: r.result.as_ref().ok().map(|x| x.termination),
            total_inner_evals: r.result.as_ref().ok().map(|x| x.total_inner_evals),
            error: r.result.as_ref().err().map(String::as_str),
        });
        paths.push(path);
    }
    let file = SummaryFile {
        summary: &out.summary,
        runs: meta,
        config,
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| Error::io(dir, e))?;
    let p = dir.join("summary.json");
    fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
    let p = dir.join("summary.csv");
    fs::write(&p, summary_csv(&out.summary)).map_err(|e| Error::io(&p, e))?;
    Ok(paths)
}

fn relative_to(base: &Path) -> impl Fn(&Path) -> String + '_ {
    move |p| p.strip_prefix(base).unwrap_or(p).display().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::parse_config;

    fn config(solvers: &[&str], reps: usize) -> ExperimentConfig {
        let mut text = format!(
            "repetitions = {reps}\nmax_iters = 200\nseed = 3\n[problem]\nrecipe = \"kl_inverse\"\nm = 6\nn = 8\n"
        );
        for s in solvers {
            text.push_str(&format!("[[solver]]\nid = \"{s}\"\n"));
        }
        parse_config(&text).unwrap()
    }

    #[test]
    fn cardinality() {
        let out = run_experiment(&config(&["BregFW", "MD"], 3));
        assert_eq!(out.runs.len(), 6);
        assert_eq!(out.summary.rows.len(), 2);
        assert!(
            out.runs.iter().all(|r| r.result.is_ok()),
            "{:?}",
            out.runs.iter().map(|r| &r.result).collect::<Vec<_>>()
        );
        assert!(out
            .summary
            .repetitions
            .iter()
            .all(|r| r.fstar_source == FStarSource::Generator));
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let mut c = config(&["BregFW", "ProjGD"], 1);
        c.solvers[1].step = Some(-1.0);
        let out = run_experiment(&c);
        assert!(out.runs[0].result.is_ok());
        assert!(out.runs[1].result.is_err());
        assert_eq!(out.summary.rows[1].failed, 1);
    }

    #[test]
    fn stats() {
        let s = Stats::of(&[1.0, 2.0, 6.0]);
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.median, 2.0);
        assert!((s.std - 7.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(Stats::of(&[4.0]).std, 0.0);
    }
}
