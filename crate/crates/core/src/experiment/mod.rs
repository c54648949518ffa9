//! Configuration-driven experiments: dataset recipes, batch runs over
//! solvers and repetitions, summaries and trace files.

mod check;
mod config;
mod recipes;
mod run;
mod specs;
mod traces;

pub use check::{check_problem, CheckReport, Verdict};
pub use config::{
    load_config, parse_config, parse_config_in, ExperimentConfig, KernelChoice, ProblemSource,
    ScheduleKind, SolverId, SolverSpec, TraceFormat,
};
pub use recipes::{generate_dataset, Dataset, RecipeParams, RECIPES};
pub use run::{
    build_dataset, run_experiment, run_solver, summary_csv, write_outputs, ExperimentOutput,
    FStarSource, Repetition, RunOutcome, Stats, Summary, SummaryRow,
};
pub use specs::{parse_kernel_spec, parse_region_spec};
pub use traces::{emit_traces, read_traces, traces_to_csv, traces_to_json, CSV_HEADER};
