//! Optimal transport density and Kantorovich potential for the cost
//! `∫ k(x) |dx|`, computed as the large-time stationary state of a
//! critical-slope sand surface model written for the sand flux.
//!
//! Sand poured at the source `f+` and removed at the sink `f-` builds a
//! surface `u` whose slope never exceeds `k`; once the surface stops
//! changing, the flux `q` carries `f+` to `f-` at minimal cost, `a = |q| / k`
//! is the transport density and `u` the Kantorovich potential.
//!
//! Pipeline: [`geometry`] rasterizes shapes onto a [`grid::Grid`],
//! [`solver`] evolves the flux to stationarity, [`analysis`] recovers `u`,
//! `a` and checks the result, and [`oracles`] provides independent reference
//! solutions.

pub mod analysis;
pub mod config;
pub mod error;
pub mod export;
pub mod geometry;
pub mod grid;
pub mod oracles;
pub mod par;
pub mod run;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{CellField, Edge, FluxField, Grid};
pub use par::Execution;
pub use solver::{ProblemFields, SolveResult, SolveState, Solver, SolverParams, SweepOrder};
