pub mod adaptive;
pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod location;
pub mod model;
pub mod statdist;
pub mod working_mle;

pub use error::{Degeneracy, Error, Result};
