//! Quality-gated foliar disease identification: a from-scratch CNN engine,
//! image preprocessing and augmentation, a no-reference quality gate, a
//! disease classifier, evaluation metrics and the file formats around them.

pub mod augment;
pub mod backbone;
pub mod classifier;
pub mod error;
pub mod imaging;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod quality;
pub mod registry;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod workflow;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
