use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{standard_normal, DiffusionModel};
use crate::error::{dim_err, domain_err, Error, Result};
use crate::nn::{AdamConfig, Gradients};

/// Noise-prediction loss of one batch with its parameter gradients.
#[derive(Debug, Clone)]
pub struct LossAndGrads {
    pub loss: f64,
    pub grads: Gradients,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Stop after this many optimizer steps, if set.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 256,
            adam: AdamConfig::default(),
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Loss of the untrained model, estimated over the whole training set.
    pub initial_loss: f64,
    /// Mean batch loss of every epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss of the trained model, estimated like `initial_loss`.
    pub final_loss: f64,
    pub steps: usize,
}

impl DiffusionModel {
    /// Loss `mean_i ||eps_i - eps_hat(x_t_i, t_i)||^2` for explicit
    /// `(x0, t, eps)` triples, with gradients for every denoiser parameter.
    ///
    /// `x0` is in data units; `eps` is in the model's scaled units.
    pub fn loss_at(&self, x0: ArrayView2<f64>, ts: &[usize], eps: ArrayView2<f64>) -> Result<LossAndGrads> {
        let b = x0.nrows();
        if b == 0 {
            return domain_err("empty training batch");
        }
        if ts.len() != b || eps.dim() != x0.dim() || x0.ncols() != self.data_dim() {
            return dim_err("x0, t and eps batches do not line up");
        }
        let sched = self.schedule();
        let mut x_t = Array2::zeros(x0.raw_dim());
        for (i, &t) in ts.iter().enumerate() {
            sched.validate_step(t)?;
            let (a, s) = (sched.alpha_bar(t).sqrt(), (1.0 - sched.alpha_bar(t)).sqrt());
            let mut row = x_t.row_mut(i);
            row.assign(&x0.row(i));
            row *= self.data_scale() * a;
            row.scaled_add(s, &eps.row(i));
        }
        let embed = self.embed_rows(ts);
        let cache = self.denoiser().forward(x_t.view(), Some(embed.view()))?;
        let diff = cache.output() - &eps;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() / b as f64;
        let out_grad = diff * (2.0 / b as f64);
        let back = self.denoiser().backward(&cache, out_grad.view())?;
        Ok(LossAndGrads {
            loss,
            grads: back.grads,
        })
    }

    /// Loss with `t ~ Uniform{1..T}` and `eps ~ N(0, I)` drawn per sample.
    pub fn training_loss<R: Rng + ?Sized>(&self, x0: ArrayView2<f64>, rng: &mut R) -> Result<LossAndGrads> {
        if x0.nrows() == 0 {
            return domain_err("empty training batch");
        }
        let steps = self.schedule().steps();
        let ts: Vec<usize> = (0..x0.nrows()).map(|_| rng.random_range(1..=steps)).collect();
        let eps = standard_normal(x0.nrows(), x0.ncols(), rng);
        self.loss_at(x0, &ts, eps.view())
    }

    /// Forward-only loss estimate over `data` in batches.
    fn estimate_loss<R: Rng + ?Sized>(&self, data: ArrayView2<f64>, batch: usize, rng: &mut R) -> Result<f64> {
        let steps = self.schedule().steps();
        let sched = self.schedule();
        let mut total = 0.0;
        for chunk in data.axis_chunks_iter(Axis(0), batch.max(1)) {
            let ts: Vec<usize> = (0..chunk.nrows()).map(|_| rng.random_range(1..=steps)).collect();
            let eps = standard_normal(chunk.nrows(), chunk.ncols(), rng);
            let mut x_t = chunk.to_owned() * self.data_scale();
            for (i, &t) in ts.iter().enumerate() {
                let mut row = x_t.row_mut(i);
                row *= sched.alpha_bar(t).sqrt();
                row.scaled_add((1.0 - sched.alpha_bar(t)).sqrt(), &eps.row(i));
            }
            let pred = self.denoiser().predict(x_t.view(), Some(self.embed_rows(&ts).view()))?;
            total += (&pred - &eps).iter().map(|v| v * v).sum::<f64>();
        }
        Ok(total / data.nrows() as f64)
    }
}

/// Minibatch Adam training of the noise predictor on `data` (one sample per row).
pub fn train<R: Rng + ?Sized>(
    model: &mut DiffusionModel,
    data: ArrayView2<f64>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainReport> {
    if data.nrows() == 0 {
        return domain_err("empty training set");
    }
    if cfg.batch_size == 0 {
        return domain_err("batch_size must be positive");
    }
    let eval_batch = 4096;
    let initial_loss = model.estimate_loss(data, eval_batch, rng)?;
    let mut state = model.denoiser().adam_state(cfg.adam);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for idx in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let batch = data.select(Axis(0), idx);
            let LossAndGrads { loss, grads } = model.training_loss(batch.view(), rng)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: format!("non-finite loss {loss} at step {steps}"),
                    trace: epoch_losses,
                });
            }
            model.denoiser_mut().apply_adam(&grads, &mut state)?;
            sum += loss;
            batches += 1;
            steps += 1;
        }
        if batches > 0 {
            epoch_losses.push(sum / batches as f64);
            log::debug!("epoch {epoch}: loss {:.5}", sum / batches as f64);
        }
        if cfg.max_steps.is_some_and(|m| steps >= m) {
            break 'epochs;
        }
    }
    let final_loss = model.estimate_loss(data, eval_batch, rng)?;
    Ok(TrainReport {
        initial_loss,
        epoch_losses,
        final_loss,
        steps,
    })
}
