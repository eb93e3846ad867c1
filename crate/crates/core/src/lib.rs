//! Removal of block-compression artifacts with a residual convolutional
//! generator trained under MSE, SSIM or conditional adversarial objectives.

pub mod codec;
pub mod error;
pub mod gradsuite;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod restoration;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
