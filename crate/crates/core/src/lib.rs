pub mod bands;
pub mod bathymetry;
pub mod error;
pub mod flat;
pub mod io;
pub mod operator;
pub mod predictor;
pub mod quasimode;
mod quadrature;

pub use error::{Error, Result};
