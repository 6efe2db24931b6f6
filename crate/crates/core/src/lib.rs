//! Token-efficient item representation for sequential recommendation.

pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod prompt;
pub mod registry;
pub mod reri;
pub mod risa;
pub mod train;

pub use error::{Error, Result};
