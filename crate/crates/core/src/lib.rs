pub mod asymptotics;
pub mod brute_force;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
