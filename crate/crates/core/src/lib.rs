//! Numerical continuation and bifurcation analysis for planar ODE systems,
//! with the human-coupled forest-grassland model as the built-in instance.
//!
//! * [`model`]: vector field, Jacobian and closed-form criticality formulas.
//! * [`solver`]: Newton, 2x2 eigenvalues and equilibrium search.
//! * [`odeint`]: adaptive Dormand-Prince integration and perturbation scenarios.
//! * [`continuation`]: equilibrium branches, codimension-one and -two loci.
//! * [`cycles`]: periodic orbits by orthogonal collocation, Floquet
//!   multipliers and folds of cycles.

pub mod continuation;
pub mod cycles;
pub mod error;
pub mod model;
pub mod odeint;
pub mod solver;

pub use error::{Error, Result};
