//! Induced random walks on subgraphs of the integer lattice, an adaptive
//! construction that pushes such walks to infinity, and the oracles used to
//! check the simulations.

pub mod branching;
pub mod cli;
pub mod error;
pub mod exceptional;
pub mod greedy;
pub mod lattice;
pub mod multiwalk;
pub mod oracles;
pub mod report;
pub mod stats;
pub mod stream;
pub mod walk;

pub use error::{Error, Result};
