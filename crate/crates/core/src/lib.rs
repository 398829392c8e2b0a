pub mod analysis;
pub mod covariance;
pub mod embedding;
pub mod error;
pub mod fft;
pub mod io;
pub mod quadrature;
pub mod sampler;
pub mod specialfn;

pub use error::{Error, Result};
