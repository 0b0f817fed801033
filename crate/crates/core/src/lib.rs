pub mod data;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod image;
pub mod losses;
pub mod networks;
pub mod priors;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
