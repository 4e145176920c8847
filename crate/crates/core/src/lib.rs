//! Surface reconstruction from calibrated multi-view azimuth maps.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod eval;
pub mod field;
pub mod geom;
pub mod io;
pub mod maps;
pub mod seed;
pub mod synth;
pub mod tracing;
pub mod train;

pub use error::{Error, Result};
