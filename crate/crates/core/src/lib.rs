pub mod env;
pub mod error;
pub mod gp;
pub mod harness;
pub mod io;
pub mod optim;
pub mod policy;
pub mod rng;
pub mod sobol;
pub mod stats;
pub mod surrogate;
pub mod trainer;
pub mod tuner;

pub use error::{Error, Result};
