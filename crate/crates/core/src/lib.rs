pub mod annotation;
pub mod center;
pub mod classical;
pub mod detector;
pub mod error;
pub mod eval;
pub mod net;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod synth;
pub mod tensor;
pub mod tiling;

pub use error::{Error, Result};
