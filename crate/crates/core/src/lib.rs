//! Stochastic simulation of chemical reaction networks: exact SSA and
//! approximate leaping samplers, benchmark models and ensemble comparison.

pub mod analysis;
pub mod builtin;
pub mod model;
pub mod sampling;
pub mod solvers;
pub mod stats;
pub mod stepping;
pub mod validate;
