//! Simulation and analysis of a single bosonic mode under linear loss,
//! thermal pumping, coherent driving and engineered nonlinear dissipation.

pub mod error;
pub mod evolve;
pub mod fock;
pub mod gadgets;
pub mod liouvillian;
pub mod observables;
pub mod scenarios;
pub mod steady;

pub use error::{Error, Result};
