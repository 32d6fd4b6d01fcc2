pub mod bounds;
pub mod certificates;
pub mod error;
pub mod experiments;
pub mod gauges;
pub mod linalg;
pub mod model;
pub mod polytope;
pub mod solvers;

pub use error::{Error, Result};
