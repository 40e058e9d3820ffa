//! End-to-end experiments: the DDPM receiver against the DNN demapper
//! (BER sweep) and DDPM constellation shaping (mutual-information sweep).

mod baseline;
mod receiver;
mod shaping;

pub use baseline::{accuracy, train_dnn_baseline, BaselineConfig, BaselineDnn};
pub use receiver::{
    compare_receivers, run_receiver_ber_sweep, BerRow, ReceiverComparison, ReceiverExperimentConfig, ReceiverKind,
};
pub use shaping::{
    run_mi_sweep, shape_constellation, shaping_stream, transmit_shaped, MiArm, MiExperimentConfig, MiRow, MiSweep,
    ShapedDistribution,
};

use serde::{Deserialize, Serialize};

use crate::comms::Constellation;
use crate::diffusion::{train, DenoiserConfig, DiffusionModel, ScheduleParams, TrainConfig, TrainReport, VarianceSchedule};
use crate::error::{Error, Result};
use crate::nn::AdamConfig;
use crate::rng;
use rand::Rng;

/// Clean constellation points enter the denoiser scaled to unit variance per
/// coordinate, which makes the physical SNR and the step SNR coincide.
pub const CONSTELLATION_DATA_SCALE: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpmTrainConfig {
    pub order: usize,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub embed_dim: usize,
    pub train_samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for DdpmTrainConfig {
    fn default() -> Self {
        let s = ScheduleParams::default();
        let d = DenoiserConfig::default();
        let t = TrainConfig::default();
        DdpmTrainConfig {
            order: 16,
            steps: s.steps,
            beta_start: s.beta_start,
            beta_end: s.beta_end,
            hidden_width: d.hidden_width,
            hidden_layers: d.hidden_layers,
            embed_dim: d.embed_dim,
            train_samples: 100_000,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.adam.learning_rate,
        }
    }
}

/// A diffusion model trained on the points of one QAM constellation.
#[derive(Debug, Clone)]
pub struct ConstellationDdpm {
    pub model: DiffusionModel,
    pub order: usize,
}

impl ConstellationDdpm {
    pub fn new(model: DiffusionModel, order: usize) -> Result<Self> {
        Constellation::qam(order)?;
        if model.data_dim() != 2 {
            return Err(Error::State(format!("constellation model must be 2-D, got {}", model.data_dim())));
        }
        Ok(ConstellationDdpm { model, order })
    }

    pub fn constellation(&self) -> Constellation {
        Constellation::qam(self.order).expect("order validated on construction")
    }

    pub fn checksum(&self) -> String {
        self.model.checksum()
    }

    pub(crate) fn expect_order(&self, order: usize) -> Result<()> {
        if self.order != order {
            return Err(Error::State(format!(
                "diffusion model was trained on {}-QAM, experiment uses {order}-QAM",
                self.order
            )));
        }
        Ok(())
    }
}

/// Trains a DDPM on uniformly drawn clean symbols of `cfg.order`-QAM.
pub fn train_ddpm_on_constellation(cfg: &DdpmTrainConfig, seed: u64) -> Result<(ConstellationDdpm, TrainReport)> {
    let c = Constellation::qam(cfg.order)?;
    let schedule = VarianceSchedule::linear(cfg.steps, cfg.beta_start, cfg.beta_end)?;
    let denoiser = DenoiserConfig {
        hidden_width: cfg.hidden_width,
        hidden_layers: cfg.hidden_layers,
        embed_dim: cfg.embed_dim,
    };
    let mut model = DiffusionModel::new(schedule, 2, denoiser, CONSTELLATION_DATA_SCALE, rng::derive_seed(seed, &[0]))?;
    let mut data_rng = rng::derived(seed, &[1]);
    let indices: Vec<usize> = (0..cfg.train_samples)
        .map(|_| data_rng.random_range(0..cfg.order))
        .collect();
    let data = c.points_matrix(&indices);
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        max_steps: None,
    };
    let report = train(&mut model, data.view(), &train_cfg, &mut rng::derived(seed, &[2]))?;
    Ok((ConstellationDdpm::new(model, cfg.order)?, report))
}

/// Evaluates `f(0..n)` over a pool of scoped worker threads; results come back in index order.
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(n);
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<T>>> = (0..n).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                *slots[i].lock().unwrap() = Some(f(i));
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every job ran"))
        .collect()
}
