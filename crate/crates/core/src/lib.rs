//! Multi-contrast convolutional dictionary model.
//!
//! A reference image and a degraded target image of the same anatomy are
//! split into common convolutional sparse features shared by both
//! contrasts and unique features for each, by alternating
//! proximal-gradient steps. The restored target is synthesized from the
//! common and target-unique features.
//!
//! This crate is `no_std` and only needs `alloc`; file formats, k-space
//! degradations and the command line live in the `mccdic` crate.
#![no_std]
extern crate alloc;

pub mod dictionary;
pub mod error;
pub mod learn;
pub mod metrics;
pub mod phantom;
pub mod prox;
pub mod sampling;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{axpy, dot, Features, Tensor};
