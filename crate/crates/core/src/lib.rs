//! Single-scene generative triplane radiance fields trained on image patches.

pub mod camera;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod harness;
pub mod image;
mod kernel;
pub mod metrics;
pub mod nn;
pub mod patch;
pub mod render;
pub mod trainer;
pub mod triplane;

pub use error::{Error, Result};
pub use tripatch_autograd as autograd;
