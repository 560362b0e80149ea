//! Periodic orbits by orthogonal collocation: cycles born at Hopf points,
//! their continuation, Floquet multipliers and folds of cycles.

mod branch;
mod collocation;
mod mesh;

pub use branch::{
    continue_cycles, lpc_two_param, stability_changes, stability_changes_at_lpc, CycleBranch, CycleBranchSettings,
    LimitPointCycle,
};
pub use collocation::{
    collocation_residual, cycle_from_hopf, floquet_multipliers, monodromy, solve_cycle, Cycle, CycleSettings,
    CycleStability, MAX_HOPF_AMPLITUDE, MONODROMY_CONDITION_LIMIT,
};
pub use mesh::{gauss_legendre, CycleMesh};
