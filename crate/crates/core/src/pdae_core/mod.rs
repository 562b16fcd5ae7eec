//! The abstract discretized system, its auxiliary stationary problem, multiplier
//! recovery and the constrained time integrator.

mod constants;
mod integrator;
mod system;
mod time;

pub use constants::{OperatorConstants, ESTIMATE_LIMIT};
pub use integrator::{
    check_energy_estimate, solve_eps_system, solve_eps_system_with, EnergyReport, SolverOptions,
};
pub(crate) use integrator::{check_initial_constraint, StepSolver};
pub use system::{
    assemble_schur, consistency_defect, recover_multiplier, solve_auxiliary, DiscretePdae,
    MultiplierMap, PdaeMatrices,
};
pub use time::{ForcingSpec, State, TimeGrid, Trajectory};
