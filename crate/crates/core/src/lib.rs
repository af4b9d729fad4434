//! Night glow synthesis and night haze enhancement.
//!
//! * [`apsf`]: atmospheric point spread function weights and 2D kernels
//! * [`lightsource`]: threshold mask, closed-form matting refinement, light-source image
//! * [`glow`]: glow convolution, compositing, batch dataset generation
//! * [`gradops`]: pixel-difference edges, bilateral texture, consistency metrics
//! * [`enhance`]: attention map and attention-guided gamma enhancement
//! * [`metrics`]: PSNR and SSIM

pub mod apsf;
pub mod enhance;
pub mod error;
pub mod glow;
pub mod gradops;
pub mod imgio;
pub mod lightsource;
pub mod metrics;

pub use error::{Error, Result};
pub use imgio::{ImageBuffer, Matte};
