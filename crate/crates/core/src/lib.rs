pub mod arith;
pub mod criterion;
pub mod density;
pub mod error;
pub mod multiquad;
pub mod quadratic;

pub use error::{Error, Result};
