//! Spatially discretized Michaelis-Menten reaction-diffusion models and
//! their quasi-steady-state reductions.
//!
//! The crate discretizes the full and reduced systems on a uniform 1-D cell
//! grid ([`grid`], [`models`]), integrates them with an L-stable TR-BDF2
//! scheme and banded Newton solves ([`integrator`], [`mol`]), checks the
//! closed-form reductions against a generic Tikhonov-Fenichel projection
//! ([`tf`]) and measures convergence of full to reduced solutions as ε → 0
//! ([`experiments`]).

pub mod banded;
pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod models;
pub mod mol;
pub mod profiles;
pub mod tf;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use experiments::{
    fit_convergence_order, monitor_invariants, run_comparison, run_sweep, ConvergenceReport,
    ErrorRecord, InvariantReport, SweepSpec,
};
pub use grid::{build_laplacian, DiscreteLaplacian, Field, Grid1D};
pub use integrator::{integrate, integrate_with_stops, IntegratorConfig, IntegratorError, Trajectory};
pub use models::{
    project_initial_values, slow_manifold_c, DiffusionConstants, FullState, Model, ModelKind,
    ModelSpec, RateConstants, ReducedState,
};
pub use mol::MolSystem;
pub use profiles::{build_initial_profiles, InitialConditionSpec};
pub use tf::{tf_reduce_generic, FastSlowDecomposition, MmDecomposition, MmVariant, ReductionResult};
