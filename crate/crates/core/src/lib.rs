//! Conformal strip maps over rough ridge-like bathymetry and pseudospectral
//! solvers for the reduced weakly nonlinear, weakly dispersive water-wave
//! models written in conformal variables.
//!
//! * [`spectral`]: periodic grids, fields and Fourier multipliers.
//! * [`conformal`]: the strip map, its inverse, effective depth.
//! * [`models`]: right-hand sides of the KP, KdV and Boussinesq models.
//! * [`integrator`]: adaptive Dormand–Prince time stepping.
//! * [`scenario`]: configuration, initial data, topography builders,
//!   snapshot files and the run driver behind the `kpconf` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod conformal;
pub mod integrator;
pub mod interp;
pub mod models;
pub mod scenario;
pub mod spectral;

pub use conformal::{
    deriv_m, effective_depth, invert_map, small_amplitude_m, solve_strip_map, EffectiveDepth,
    MapError, Rectangle, StripMap, StripMapOptions, Topography,
};
pub use integrator::{
    integrate, step_once, IntegrateError, SnapshotSchedule, StepOutcome, StepperConfig,
};
pub use models::{
    rhs_boussinesq, rhs_kdv_conformal, rhs_kdv_physical, rhs_kp_classical, rhs_kp_slow,
    rhs_kp_small, riemann_invariants, to_physical, BoussinesqState, CoefficientSet, ModelError,
    ModelKind, ModelParams,
};
pub use scenario::{
    build_random_patch, crest_position, ic_gaussian_derivative, read_snapshot, write_snapshot,
    RunManifest, Scenario, ScenarioConfig, ScenarioError, SnapshotRecord,
};
pub use spectral::{
    antideriv_x, apply_multiplier, dealias_23, deriv_x, Axis, PeriodicGrid, SpectralError,
    SpectralField,
};
