use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::schedule::{ScheduleParams, VarianceSchedule};
use crate::error::{dim_err, Error, Result};
use crate::nn::{HiddenActivation, Mlp, MlpConfig, OutputActivation, TimeEmbedding};

/// Rows processed together by the sampling loops.
const CHUNK_ROWS: usize = 4096;

/// Anything that predicts the noise component of a diffused batch.
pub trait NoisePredictor {
    /// `x_t` holds one sample per row, all at step `t`.
    fn predict_noise(&self, x_t: ArrayView2<f64>, t: usize) -> Result<Array2<f64>>;
}

/// One ancestral step:
/// `x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t) + sigma_t z`.
///
/// `z` is ignored at `t = 1`, where `sigma_1 = 0`. `None` means `z = 0`.
pub fn reverse_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &VarianceSchedule,
    x_t: ArrayView2<f64>,
    t: usize,
    z: Option<ArrayView2<f64>>,
) -> Result<Array2<f64>> {
    schedule.validate_step(t)?;
    let eps_hat = predictor.predict_noise(x_t, t)?;
    if eps_hat.dim() != x_t.dim() {
        return dim_err("noise prediction shape differs from x_t");
    }
    let coef = schedule.beta(t) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let mut out = (&x_t - &(eps_hat * coef)) / schedule.alpha(t).sqrt();
    if t > 1 {
        if let Some(z) = z {
            if z.dim() != x_t.dim() {
                return dim_err("z shape differs from x_t");
            }
            out.scaled_add(schedule.posterior_variance(t).sqrt(), &z);
        }
    }
    Ok(out)
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Runs stochastic reverse steps `from..=1` on `x`.
pub fn reverse_chain<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    predictor: &P,
    schedule: &VarianceSchedule,
    mut x: Array2<f64>,
    from: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    schedule.validate_step(from)?;
    for t in (1..=from).rev() {
        if t > 1 {
            let z = standard_normal(x.nrows(), x.ncols(), rng);
            x = reverse_step(predictor, schedule, x.view(), t, Some(z.view()))?;
        } else {
            x = reverse_step(predictor, schedule, x.view(), t, None)?;
        }
    }
    Ok(x)
}

/// Shape of the time-conditioned noise predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub embed_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            hidden_width: 128,
            hidden_layers: 3,
            embed_dim: 128,
        }
    }
}

/// A variance schedule paired with a noise-prediction network.
///
/// Data enters the model multiplied by `data_scale`; every public method takes
/// and returns data in its original units.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    schedule: VarianceSchedule,
    denoiser: Mlp,
    embedding: TimeEmbedding,
    embed_table: Array2<f64>,
    data_scale: f64,
}

impl DiffusionModel {
    pub fn new(
        schedule: VarianceSchedule,
        data_dim: usize,
        denoiser: DenoiserConfig,
        data_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut layer_dims = vec![data_dim];
        layer_dims.extend(std::iter::repeat_n(denoiser.hidden_width, denoiser.hidden_layers));
        layer_dims.push(data_dim);
        let net = Mlp::init(
            MlpConfig {
                layer_dims,
                hidden_activation: HiddenActivation::Softplus,
                output_activation: OutputActivation::Linear,
                embed_dim: denoiser.embed_dim,
            },
            seed,
        )?;
        Self::from_parts(schedule, net, data_scale)
    }

    /// Assembles a model from an existing network, e.g. one read from disk.
    pub fn from_parts(schedule: VarianceSchedule, denoiser: Mlp, data_scale: f64) -> Result<Self> {
        let cfg = denoiser.config();
        if cfg.input_dim() != cfg.output_dim() {
            return dim_err("denoiser input and output widths differ");
        }
        if cfg.output_activation != OutputActivation::Linear {
            return Err(Error::Domain("denoiser output must be linear".into()));
        }
        if cfg.embed_dim == 0 || cfg.n_layers() < 2 {
            return Err(Error::Domain("denoiser must be a time-conditioned MLP with hidden layers".into()));
        }
        if !(data_scale.is_finite() && data_scale > 0.0) {
            return Err(Error::Domain(format!("data_scale must be positive, got {data_scale}")));
        }
        let embedding = TimeEmbedding::new(cfg.embed_dim, schedule.steps())?;
        Ok(DiffusionModel {
            embed_table: embedding.table(),
            schedule,
            denoiser,
            embedding,
            data_scale,
        })
    }

    pub fn schedule(&self) -> &VarianceSchedule {
        &self.schedule
    }

    pub fn denoiser(&self) -> &Mlp {
        &self.denoiser
    }

    pub fn denoiser_mut(&mut self) -> &mut Mlp {
        &mut self.denoiser
    }

    pub fn embedding(&self) -> TimeEmbedding {
        self.embedding
    }

    pub fn data_dim(&self) -> usize {
        self.denoiser.config().input_dim()
    }

    pub fn data_scale(&self) -> f64 {
        self.data_scale
    }

    /// Embedding rows for a batch of per-sample steps.
    pub(crate) fn embed_rows(&self, ts: &[usize]) -> Array2<f64> {
        self.embed_table.select(Axis(0), ts)
    }

    /// Hex SHA-256 identifying the schedule, scaling and every network parameter.
    pub fn checksum(&self) -> String {
        let ScheduleParams {
            steps,
            beta_start,
            beta_end,
        } = self.schedule.params();
        let mut h = Sha256::new();
        h.update(b"ddpm");
        h.update((steps as u64).to_le_bytes());
        h.update(beta_start.to_le_bytes());
        h.update(beta_end.to_le_bytes());
        h.update(self.data_scale.to_le_bytes());
        h.update(self.denoiser.digest());
        hex::encode(h.finalize())
    }

    /// Draws `n` samples by ancestral sampling from `x_T ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Array2<f64>> {
        let d = self.data_dim();
        let mut out = Array2::zeros((n, d));
        let mut start = 0;
        while start < n {
            let rows = CHUNK_ROWS.min(n - start);
            let x_t = standard_normal(rows, d, rng);
            let x0 = reverse_chain(self, &self.schedule, x_t, self.schedule.steps(), rng)?;
            out.slice_mut(ndarray::s![start..start + rows, ..]).assign(&x0);
            start += rows;
        }
        out /= self.data_scale;
        Ok(out)
    }

    /// Diffusion step matched to an observation `y = x + n` at `snr_db`.
    ///
    /// Observations are assumed to carry unit signal energy and noise energy
    /// `10^(-snr_db/10)`, both spread evenly over the data coordinates. After
    /// scaling by `data_scale * sqrt(alpha_bar_t)` the per-coordinate noise
    /// equals the step-`t` marginal noise when
    /// `alpha_bar / (1 - alpha_bar) = data_dim / (data_scale^2 sigma^2)`.
    pub fn observation_step(&self, snr_db: f64) -> usize {
        let d = self.data_dim() as f64;
        let offset = 10.0 * (d / (self.data_scale * self.data_scale)).log10();
        self.schedule.snr_to_timestep(snr_db + offset)
    }

    /// Partial reverse diffusion of received vectors, starting from the step
    /// whose noise level matches `snr_db`.
    pub fn denoise_observation<R: Rng + ?Sized>(
        &self,
        y: ArrayView2<f64>,
        snr_db: f64,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        let t_start = self.observation_step(snr_db);
        self.denoise_from_step(y, t_start, rng)
    }

    /// Scales `y` into the step-`t_start` marginal and runs the reverse chain to step 0.
    pub fn denoise_from_step<R: Rng + ?Sized>(
        &self,
        y: ArrayView2<f64>,
        t_start: usize,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        if y.ncols() != self.data_dim() {
            return dim_err(format!("observation width {} != data_dim {}", y.ncols(), self.data_dim()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite observation".into()));
        }
        self.schedule.validate_step(t_start)?;
        let gain = self.data_scale * self.schedule.alpha_bar(t_start).sqrt();
        let n = y.nrows();
        let mut out = Array2::zeros(y.raw_dim());
        let mut start = 0;
        while start < n {
            let rows = CHUNK_ROWS.min(n - start);
            let x = y.slice(ndarray::s![start..start + rows, ..]).to_owned() * gain;
            let x0 = reverse_chain(self, &self.schedule, x, t_start, rng)?;
            out.slice_mut(ndarray::s![start..start + rows, ..]).assign(&x0);
            start += rows;
        }
        out /= self.data_scale;
        Ok(out)
    }
}

impl NoisePredictor for DiffusionModel {
    fn predict_noise(&self, x_t: ArrayView2<f64>, t: usize) -> Result<Array2<f64>> {
        self.schedule.validate_step(t)?;
        let row = self.embed_table.slice(ndarray::s![t..t + 1, ..]);
        self.denoiser.predict(x_t, Some(row))
    }
}
