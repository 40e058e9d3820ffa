//! Denoising diffusion core: schedule, forward noising, noise-prediction
//! training, ancestral sampling and SNR-aligned partial denoising.

mod model;
mod schedule;
mod train;

pub use model::{reverse_chain, reverse_step, DenoiserConfig, DiffusionModel, NoisePredictor};
pub use schedule::{ScheduleParams, VarianceSchedule};
pub use train::{train, LossAndGrads, TrainConfig, TrainReport};
