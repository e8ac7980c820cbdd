pub mod augment;
pub mod dataset;
pub mod error;
pub mod synthgen;
pub mod util;

pub use error::{Error, Result};
