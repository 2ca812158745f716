pub mod assembly;
pub mod cases;
pub mod dataset;
pub mod error;
pub mod invariance;
pub mod library;
pub mod selection;
pub mod solver;
pub mod symbolic;
pub mod synthetic;

pub use error::{CtsrError, Result};
