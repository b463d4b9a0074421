pub mod adapt;
pub mod attributes;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod losses;
pub mod model;
pub mod nn;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
