pub mod augment;
pub mod error;
pub mod eval;
pub mod features;
pub mod lexical;
pub mod model;
pub mod ndiff;
pub mod objective;
pub mod pipeline;
pub mod tacg;

pub use error::{Error, Result};
