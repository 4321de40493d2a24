//! Two-band Ambisonic decoder design: spherical harmonics, speaker arrays,
//! classical decoders, Gerzon-vector metrics and numerical optimization.

pub mod array;
pub mod baseline;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod optimize;
pub mod sh;

pub use error::{Error, Result};
