//! Rectified-stereo toolkit: canonical stereo frame and Plücker rays,
//! disparity warping and masking, training losses with gradients, diffusion
//! schedule math, SGBM matching, and the scale-calibrated evaluation
//! protocol.

pub mod diffusion;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod imaging;
pub mod losses;
pub mod matching;
pub mod numeric;

pub use error::{Error, Result};
