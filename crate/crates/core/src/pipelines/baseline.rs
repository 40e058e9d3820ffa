//! Supervised DNN demapper used as the benchmark receiver.
//!
//! A softmax classifier over constellation indices with inputs `(I, Q, s)`,
//! where `s` is the channel SNR mapped linearly onto `[-1, 1]` over the
//! training range. Training symbols are corrupted online, with the SNR of
//! each sample drawn uniformly from the range.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comms::Constellation;
use crate::error::{dim_err, Error, Result};
use crate::nn::{AdamConfig, HiddenActivation, Mlp, MlpConfig, OutputActivation};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub order: usize,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    /// Transceiver distortion level seen during training.
    pub kappa: f64,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub epochs: usize,
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            order: 16,
            snr_min_db: -25.0,
            snr_max_db: 30.0,
            kappa: 0.1,
            hidden_width: 128,
            hidden_layers: 3,
            epochs: 20,
            samples_per_epoch: 100_000,
            batch_size: 256,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineDnn {
    net: Mlp,
    order: usize,
    snr_min_db: f64,
    snr_max_db: f64,
}

impl BaselineDnn {
    pub fn from_parts(net: Mlp, order: usize, snr_min_db: f64, snr_max_db: f64) -> Result<Self> {
        let cfg = net.config();
        if cfg.input_dim() != 3 || cfg.output_dim() != order || cfg.output_activation != OutputActivation::Softmax {
            return Err(Error::State(format!(
                "baseline network {:?} does not classify {order}-QAM from (I, Q, snr)",
                cfg.layer_dims
            )));
        }
        if cfg.embed_dim != 0 {
            return Err(Error::State("baseline network must be unconditioned".into()));
        }
        if !(snr_max_db > snr_min_db) {
            return Err(Error::Domain(format!("empty SNR range [{snr_min_db}, {snr_max_db}]")));
        }
        Ok(BaselineDnn {
            net,
            order,
            snr_min_db,
            snr_max_db,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn snr_range(&self) -> (f64, f64) {
        (self.snr_min_db, self.snr_max_db)
    }

    fn snr_feature(&self, snr_db: f64) -> f64 {
        2.0 * (snr_db - self.snr_min_db) / (self.snr_max_db - self.snr_min_db) - 1.0
    }

    fn features(&self, rx: &[[f64; 2]], snr_db: &[f64]) -> Array2<f64> {
        let mut x = Array2::zeros((rx.len(), 3));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            row[0] = rx[i][0];
            row[1] = rx[i][1];
            row[2] = self.snr_feature(snr_db[i]);
        }
        x
    }

    /// Class probabilities, one row per received symbol.
    pub fn probabilities(&self, rx: &[[f64; 2]], snr_db: f64) -> Result<Array2<f64>> {
        let snr = vec![snr_db; rx.len()];
        self.net.predict(self.features(rx, &snr).view(), None)
    }

    /// Most probable constellation index for each received symbol.
    pub fn classify(&self, rx: &[[f64; 2]], snr_db: f64) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(rx.len());
        for chunk in rx.chunks(8192) {
            let p = self.probabilities(chunk, snr_db)?;
            out.extend(p.rows().into_iter().map(|r| {
                let mut best = 0;
                for k in 1..r.len() {
                    if r[k] > r[best] {
                        best = k;
                    }
                }
                best
            }));
        }
        Ok(out)
    }

    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"dnn");
        h.update((self.order as u64).to_le_bytes());
        h.update(self.snr_min_db.to_le_bytes());
        h.update(self.snr_max_db.to_le_bytes());
        h.update(self.net.digest());
        hex::encode(h.finalize())
    }
}

/// Trains the classifier with cross-entropy; returns it with the per-epoch mean loss.
pub fn train_dnn_baseline(cfg: &BaselineConfig, seed: u64) -> Result<(BaselineDnn, Vec<f64>)> {
    let c = Constellation::qam(cfg.order)?;
    if cfg.batch_size == 0 || cfg.samples_per_epoch == 0 {
        return Err(Error::Domain("batch_size and samples_per_epoch must be positive".into()));
    }
    let mut layer_dims = vec![3];
    layer_dims.extend(std::iter::repeat_n(cfg.hidden_width, cfg.hidden_layers));
    layer_dims.push(cfg.order);
    let net = Mlp::init(
        MlpConfig {
            layer_dims,
            hidden_activation: HiddenActivation::Softplus,
            output_activation: OutputActivation::Softmax,
            embed_dim: 0,
        },
        rng::derive_seed(seed, &[0]),
    )?;
    let mut dnn = BaselineDnn::from_parts(net, cfg.order, cfg.snr_min_db, cfg.snr_max_db)?;
    let mut state = dnn.net.adam_state(AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    });
    let mut rng = rng::derived(seed, &[1]);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut sum = 0.0;
        let mut batches = 0;
        let mut remaining = cfg.samples_per_epoch;
        while remaining > 0 {
            let b = remaining.min(cfg.batch_size);
            remaining -= b;
            let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..cfg.order)).collect();
            let snr: Vec<f64> = (0..b)
                .map(|_| rng.random_range(cfg.snr_min_db..=cfg.snr_max_db))
                .collect();
            let rx: Vec<[f64; 2]> = labels
                .iter()
                .zip(&snr)
                .map(|(&k, &s)| {
                    let p = c.point(k);
                    // unit-energy constellation: distortion power kappa^2
                    let std = ((10f64.powf(-s / 10.0) + cfg.kappa * cfg.kappa) / 2.0).sqrt();
                    [
                        p[0] + std * rng.sample::<f64, _>(StandardNormal),
                        p[1] + std * rng.sample::<f64, _>(StandardNormal),
                    ]
                })
                .collect();
            let x = dnn.features(&rx, &snr);
            let cache = dnn.net.forward(x.view(), None)?;
            let probs = cache.output();
            let loss = -labels
                .iter()
                .enumerate()
                .map(|(i, &k)| probs[[i, k]].max(1e-300).ln())
                .sum::<f64>()
                / b as f64;
            let mut grad = probs.clone();
            for (i, &k) in labels.iter().enumerate() {
                grad[[i, k]] -= 1.0;
            }
            grad /= b as f64;
            let back = dnn.net.backward_logits(&cache, grad)?;
            if !loss.is_finite() || !back.grads.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: format!("non-finite cross-entropy {loss}"),
                    trace,
                });
            }
            dnn.net.apply_adam(&back.grads, &mut state)?;
            sum += loss;
            batches += 1;
        }
        trace.push(sum / batches as f64);
        log::debug!("baseline epoch {epoch}: loss {:.5}", sum / batches as f64);
    }
    Ok((dnn, trace))
}

/// Fraction of `rx` classified as `tx` (both index sequences).
pub fn accuracy(tx: &[usize], decided: &[usize]) -> Result<f64> {
    if tx.len() != decided.len() || tx.is_empty() {
        return dim_err("accuracy needs equal, non-empty index sequences");
    }
    Ok(tx.iter().zip(decided).filter(|(a, b)| a == b).count() as f64 / tx.len() as f64)
}
