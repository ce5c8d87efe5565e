//! Finite-volume simulation of one-dimensional cross-diffusion systems
//!
//!   dt u_i = dx( p(u0) dx u_i + q(u0) u_i dx u0 + r(u0) u_i dx phi ),
//!   -dxx phi = u0 - f,   u0 = sum_i a_i u_i,
//!
//! with no-flux boundaries, together with the entropy machinery used to
//! certify uniqueness-type contraction properties of such systems: weighted
//! aggregation onto a scalar drift-diffusion law, H^-1 contraction of
//! aggregate differences, and decay of entropy semimetrics between solutions
//! sharing the same aggregate.

pub mod cli;
pub mod coefficients;
pub mod config;
pub mod entropy;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod fields;
pub mod linalg;
pub mod poisson;
pub mod report;
pub mod solver;

pub use coefficients::{
    check_conditions, preset_ion_transport, preset_maxwell_stefan, preset_skt, CoefficientModel,
    MsCoefficients, StructuralReport, UpperBound,
};
pub use entropy::{semimetric, EntropySpec, SemimetricKind};
pub use error::{Error, Result};
pub use expr::{Expr, ScalarFn};
pub use fields::{Field, Grid1D, SpeciesState};
pub use poisson::{hminus1_seminorm, solve_poisson, PoissonSolution};
pub use solver::{run, SchemeConfig, Trajectory};
