pub mod barrier;
pub mod battery;
pub mod dyadic;
pub mod envelope;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod harness;
pub mod kernel;
pub mod linsolve;
pub mod operators;
pub mod policy;
pub mod riesz;
pub mod special;
pub mod supersolution;

pub use error::{Error, Result};
