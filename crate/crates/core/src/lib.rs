pub mod cli;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod meta;
pub mod model;
pub mod seeding;
pub mod tensor;

pub use error::{Error, Result};
