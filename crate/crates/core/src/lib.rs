//! Potential theory and model reduction for metastable continuous-time Markov chains.

pub mod chain;
pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod models;
pub mod partition;
pub mod pathsim;
pub mod potential;
pub mod random;
pub mod reduction;
pub mod report;
pub mod tolerance;
pub mod transforms;
pub mod uniformization;

pub use chain::{build_chain, stationary, Chain, ProbVector};
pub use error::{Error, Result};
pub use partition::Partition;
