pub mod error;
pub mod expr;
pub mod geometry;

pub use error::{Error, Result};
