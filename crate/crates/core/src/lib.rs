pub mod cli;
pub mod error;
pub mod eval;
pub mod field;
pub mod geometry;
pub mod math;
pub mod networks;
pub mod nn;
pub mod render;
pub mod supervision;
pub mod training;

pub use error::{Error, Result};
