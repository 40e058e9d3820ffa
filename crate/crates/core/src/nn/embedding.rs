//! Sinusoidal time-step embeddings.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};

const BASE_PERIOD: f64 = 10_000.0;

/// Transformer-style embedding: entry `2i` is `sin(t w_i)` and entry `2i + 1`
/// is `cos(t w_i)` with `w_i = BASE_PERIOD^(-2i / dim)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeEmbedding {
    dim: usize,
    max_timestep: usize,
}

impl TimeEmbedding {
    pub fn new(dim: usize, max_timestep: usize) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 {
            return domain_err(format!("embedding width must be even and positive, got {dim}"));
        }
        if max_timestep == 0 {
            return domain_err("max_timestep must be positive");
        }
        Ok(TimeEmbedding { dim, max_timestep })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_timestep(&self) -> usize {
        self.max_timestep
    }

    /// Embeds `t` in `0..=max_timestep`; `t = 0` denotes clean data.
    pub fn embed(&self, t: usize) -> Result<Vec<f64>> {
        if t > self.max_timestep {
            return domain_err(format!("timestep {t} outside 0..={}", self.max_timestep));
        }
        Ok(self.embed_unchecked(t))
    }

    fn embed_unchecked(&self, t: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        for i in 0..self.dim / 2 {
            let freq = BASE_PERIOD.powf(-2.0 * i as f64 / self.dim as f64);
            let angle = t as f64 * freq;
            out.push(angle.sin());
            out.push(angle.cos());
        }
        out
    }

    /// Row `t` holds the embedding of timestep `t`, for `t` in `0..=max_timestep`.
    pub fn table(&self) -> Array2<f64> {
        let mut table = Array2::zeros((self.max_timestep + 1, self.dim));
        for (t, mut row) in table.rows_mut().into_iter().enumerate() {
            row.assign(&ndarray::Array1::from(self.embed_unchecked(t)));
        }
        table
    }
}
