//! Frank-Wolfe methods with Bregman short steps, an adaptive Bregman step-size
//! search, and away-step Frank-Wolfe over polytopes, together with mirror
//! descent and projected gradient baselines and an empirical diagnostics suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_io;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod feasible;
pub mod kernels;
pub mod objectives;
pub mod par;
pub mod point;
pub mod problem;
pub mod solvers;
pub mod stepsize;

pub use error::{Error, Result};
pub use feasible::Region;
pub use kernels::Kernel;
pub use objectives::Objective;
pub use par::Execution;
pub use point::DensePoint;
pub use problem::{
    make_problem, IterationRecord, ProblemInstance, RunResult, SolveConfig, StepKind, Termination,
    TheoryConstants,
};
pub use stepsize::{AdaptiveParams, StepRule};
