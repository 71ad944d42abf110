//! Asynchronous consensus ADMM over networks with partial communication.
//!
//! Each node keeps local copies of its neighbours' blocks, a dual per copy and
//! a consensus block of its own. [`Engine`] runs rounds driven by a
//! [`Scheduler`]; [`diagnostics`] evaluates Lagrangians, step-size feasibility
//! and residuals; [`experiment`] wires everything into reproducible runs.

pub mod config;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod localization;
pub mod problem;
pub mod quadratic;
pub mod reference;
pub mod schedule;
pub mod topology;

pub use config::{ProblemKind, RhoPolicy, RunConfig};
pub use diagnostics::{
    alpha_beta, augmented_lagrangian, min_feasible_rho, nrmse, stationarity_residuals, NodeParams,
    ParamCheck, Stationarity, TraceRecord,
};
pub use engine::{
    check_stop, AgentState, Engine, EngineParams, RoundInput, RoundReport, Variant, XyMessage,
};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentResult, ReplicateResult};
pub use localization::{LocalizationInstance, LocalizationProblem};
pub use problem::{ConstraintSet, NodePrior, Problem, Regularizer, Surrogate};
pub use quadratic::QuadraticProblem;
pub use reference::SynchronousAdmm;
pub use schedule::{AsynchronyModel, ScheduleKind, Scheduler};
pub use topology::{generate_geometric_graph, GeometricGraph, Topology};
