pub mod error;
pub mod geometry;
pub mod cli;
pub mod inference;
pub mod kl;
pub mod model;
pub mod point_process;
pub mod sampler;
pub mod tessellation;

pub use error::{Error, Result};
