//! Optimal turning points for the symmetric linear search problem.
//!
//! A target is hidden on the line according to a symmetric density; a
//! searcher starting at the origin zigzags with turning points
//! `0 = x_0 < x_1 < x_2 < ...`. The crate computes those turning points for
//! a range of densities and checks them against asymptotic growth laws.

pub mod asymptotics;
pub mod cli;
pub mod density;
pub mod numerics;
pub mod solver;
pub mod verify;

pub use density::{parse_spec, DensityModel, Support, TailClass};

pub use solver::{SolverConfig, TurningSequence};
