pub mod coupling;
pub mod discretize;
pub mod fpe;
pub mod error;
pub mod geometry;
pub mod hje;
pub mod measures;
pub mod mfg;
pub mod particles;

pub use error::{Error, Result};
