//! Finite-volume solver for the drift-diffusion equation of money
//! `∂P/∂t = ∂/∂m [A P + ∂(B P)/∂m]`, and estimation of `A` and `B` from
//! simulated balance changes.

mod estimate;
mod problem;
mod solver;

pub use estimate::{
    estimate_drift_diffusion, DriftDiffusionObserver, DriftDiffusionTable, MomentBinning,
};
pub use problem::{cell_averages, l1_distance, mass, Coefficient, FpProblem, Initial, MASS_TOLERANCE};
pub use solver::{fp_stationary, fp_step, fp_step_from, FpOperator, FpSolution, Scheme, StepOptions};
