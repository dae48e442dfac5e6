//! Simulation and verification of the cluster-eating coagulation system
//! `(j) + (k) -> (|j - k|)` in its exact finite truncation.

pub mod diagnostics;
pub mod grid;
pub mod integrator;
pub mod kernel;
pub mod oracles;
pub mod parser;
pub mod rhs;
pub mod state;

pub use kernel::{validate_kernel, GrowthClass, Kernel, KernelError};
pub use parser::{parse, KernelAst, ParseError};
pub use rhs::{eval_fast, eval_naive, eval_naive_with, Rhs, RhsError, RhsOutput, RhsPath, Summation};
pub use state::{ClusterState, InitialCondition, StateError};
pub use integrator::{
    integrate, integrate_from, validate_grid, IntegratorConfig, IntegratorError, IntegratorStats,
    Trajectory,
};
pub use oracles::SelfSimilarParams;
pub use diagnostics::{
    run_suite, DiagnosticsError, OracleReport, ReportContext, Suite, SuiteOptions, WeightSequence,
};
