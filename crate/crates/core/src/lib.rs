pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod groups;
pub mod losses;
pub mod models;
pub mod nn;
pub mod pipeline;

pub use error::{MgaError, Result};
