//! Denoising diffusion models for link-level wireless simulation.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: the small MLP family used as noise predictor and as the
//!   supervised baseline demapper.
//! - [`diffusion`]: variance schedules, forward noising, the noise-prediction
//!   objective, ancestral sampling and SNR-aligned denoising of observations.
//! - [`comms`]: QAM constellations, channel models, demapping, BER and
//!   mutual-information estimation.
//! - [`pipelines`]: the receiver BER experiment and the transmitter-side
//!   constellation shaping / MI experiment.

pub mod comms;
pub mod diffusion;
pub mod error;
pub mod nn;
pub mod pipelines;
pub mod rng;

pub use error::{Error, Result};
