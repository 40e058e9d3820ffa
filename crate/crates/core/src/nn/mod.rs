//! Minimal feed-forward network machinery: exact backpropagation, Adam and
//! sinusoidal time embeddings.

mod adam;
mod embedding;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use embedding::TimeEmbedding;
pub use mlp::{Backward, ForwardCache, Gradients, HiddenActivation, Mlp, MlpConfig, OutputActivation};

use crate::error::Result;

impl Mlp {
    /// Adam update of every parameter block from `grads`.
    pub fn apply_adam(&mut self, grads: &Gradients, state: &mut AdamState) -> Result<()> {
        let g = grads.slices();
        adam_step(&mut self.param_slices_mut(), &g, state)
    }

    pub fn adam_state(&self, config: AdamConfig) -> AdamState {
        AdamState::new(&self.config().param_shapes(), config)
    }
}
