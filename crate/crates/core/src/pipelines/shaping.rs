//! Probabilistic shaping from the DDPM's denoising behaviour and the
//! symbol-level mutual-information sweep built on it.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::receiver::validate_grid;
use super::{par_map, BaselineDnn, ConstellationDdpm};
use crate::comms::{demap_nearest, entropy_bits, mutual_information, ChannelKind, ChannelModel, Constellation};
use crate::error::{domain_err, Error, Result};
use crate::rng;

/// Transmit probabilities over the points of an M-QAM constellation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapedDistribution {
    pub order: usize,
    pub probs: Vec<f64>,
    /// SNR of the synthetic noise the distribution was derived at.
    pub snr_db: f64,
}

impl ShapedDistribution {
    pub fn new(order: usize, probs: Vec<f64>, snr_db: f64) -> Result<Self> {
        Constellation::qam(order)?;
        if probs.len() != order {
            return domain_err(format!("{} probabilities for {order}-QAM", probs.len()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return domain_err("probabilities must be finite and non-negative");
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return domain_err(format!("probabilities sum to {total}"));
        }
        Ok(ShapedDistribution { order, probs, snr_db })
    }

    pub fn uniform(order: usize) -> Result<Self> {
        Self::new(order, vec![1.0 / order as f64; order], f64::INFINITY)
    }

    pub fn entropy_bits(&self) -> f64 {
        entropy_bits(&self.probs)
    }

    /// `n` transmit indices drawn independently from the distribution.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        let dist = WeightedIndex::new(&self.probs).map_err(|e| Error::Domain(e.to_string()))?;
        Ok((0..n).map(|_| dist.sample(rng)).collect())
    }
}

/// Denoises synthetic noisy copies of every constellation point and takes the
/// histogram of the nearest points to the reconstructions as the transmit
/// distribution.
///
/// The `n_samples` clean symbols cycle through the constellation so each
/// point is used `n_samples / M` times (the first `n_samples % M` points once
/// more).
pub fn shape_constellation<R: Rng + ?Sized>(
    ddpm: &ConstellationDdpm,
    order: usize,
    snr_db: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<ShapedDistribution> {
    if n_samples == 0 {
        return domain_err("shaping needs at least one sample");
    }
    if !snr_db.is_finite() {
        return domain_err(format!("shaping SNR must be finite, got {snr_db}"));
    }
    ddpm.expect_order(order)?;
    let c = ddpm.constellation();
    let tx: Vec<[f64; 2]> = (0..n_samples).map(|i| c.point(i % order)).collect();
    let noisy = ChannelModel::new(ChannelKind::Awgn, snr_db, 0.0).corrupt(&tx, rng);
    let mut y = Array2::zeros((n_samples, 2));
    for (mut row, p) in y.rows_mut().into_iter().zip(&noisy) {
        row[0] = p[0];
        row[1] = p[1];
    }
    let out = ddpm.model.denoise_observation(y.view(), snr_db, rng)?;
    let points: Vec<[f64; 2]> = out.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let (idx, _) = demap_nearest(&points, &c);
    let mut counts = vec![0usize; order];
    for k in idx {
        counts[k] += 1;
    }
    let probs = counts.iter().map(|&n| n as f64 / n_samples as f64).collect();
    ShapedDistribution::new(order, probs, snr_db)
}

/// Random stream used to shape at `snr_db` under master `seed`; the MI sweep
/// and stand-alone shaping runs draw from the same stream.
pub fn shaping_stream(seed: u64, snr_db: f64) -> rng::SimRng {
    rng::derived(seed, &[2, snr_db.to_bits()])
}

fn joint_counts(order: usize, tx: &[usize], rx: &[usize]) -> Array2<u64> {
    let mut joint = Array2::zeros((order, order));
    for (&a, &b) in tx.iter().zip(rx) {
        joint[[a, b]] += 1;
    }
    joint
}

/// Sends `n_symbols` drawn from `dist` over `ch` and demaps them to the
/// nearest point; returns the `M x M` joint counts (transmitted, decided).
pub fn transmit_shaped<R: Rng + ?Sized>(
    dist: &ShapedDistribution,
    ch: &ChannelModel,
    n_symbols: usize,
    rng: &mut R,
) -> Result<Array2<u64>> {
    let c = Constellation::qam(dist.order)?;
    let tx = dist.draw(n_symbols, rng)?;
    let rx = ch.corrupt(&tx.iter().map(|&k| c.point(k)).collect::<Vec<_>>(), rng);
    let (decided, _) = demap_nearest(&rx, &c);
    Ok(joint_counts(dist.order, &tx, &decided))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiExperimentConfig {
    pub order: usize,
    pub snr_grid_db: Vec<f64>,
    pub kappa: f64,
    pub symbols_per_cell: usize,
    pub shaping_samples: usize,
    pub channels: Vec<ChannelKind>,
    pub seed: u64,
}

impl Default for MiExperimentConfig {
    fn default() -> Self {
        MiExperimentConfig {
            order: 16,
            snr_grid_db: (0..11).map(|i| -20.0 + 5.0 * i as f64).collect(),
            kappa: 0.1,
            symbols_per_cell: 100_000,
            shaping_samples: 20_000,
            channels: vec![ChannelKind::Awgn, ChannelKind::Laplacian],
            seed: 0,
        }
    }
}

impl MiExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        Constellation::qam(self.order)?;
        validate_grid(&self.snr_grid_db)?;
        if self.symbols_per_cell == 0 || self.shaping_samples == 0 {
            return domain_err("symbols_per_cell and shaping_samples must be positive");
        }
        if self.channels.is_empty() {
            return domain_err("no channel kinds selected");
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return domain_err(format!("kappa must be non-negative, got {}", self.kappa));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MiArm {
    #[serde(rename = "ddpm-shaped")]
    DdpmShaped,
    #[serde(rename = "dnn-baseline")]
    DnnBaseline,
}

impl MiArm {
    pub fn name(self) -> &'static str {
        match self {
            MiArm::DdpmShaped => "ddpm-shaped",
            MiArm::DnnBaseline => "dnn-baseline",
        }
    }
}

impl std::str::FromStr for MiArm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpm-shaped" => Ok(MiArm::DdpmShaped),
            "dnn-baseline" => Ok(MiArm::DnnBaseline),
            _ => domain_err(format!("unknown MI arm {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiRow {
    pub snr_db: f64,
    pub channel: ChannelKind,
    pub arm: MiArm,
    pub mi_bits: f64,
    /// Entropy of the transmit distribution.
    pub source_entropy_bits: f64,
    pub n_symbols: u64,
    pub seed: u64,
    pub model_checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiSweep {
    /// Ordered by SNR, then channel, then arm (DDPM first).
    pub rows: Vec<MiRow>,
    /// One distribution per grid SNR, shared by every channel kind.
    pub shaped: Vec<ShapedDistribution>,
}

fn mi_cell(
    ddpm: &ConstellationDdpm,
    dnn: &BaselineDnn,
    cfg: &MiExperimentConfig,
    snr_db: f64,
) -> Result<(ShapedDistribution, Vec<MiRow>)> {
    let snr_coord = snr_db.to_bits();
    let shaped = shape_constellation(
        ddpm,
        cfg.order,
        snr_db,
        cfg.shaping_samples,
        &mut shaping_stream(cfg.seed, snr_db),
    )?;
    let uniform = ShapedDistribution::uniform(cfg.order)?;
    let c = ddpm.constellation();
    let mut rows = Vec::with_capacity(2 * cfg.channels.len());
    for &kind in &cfg.channels {
        let ch = ChannelModel::new(kind, snr_db, cfg.kappa);
        let ch_coord = ChannelKind::ALL.iter().position(|&k| k == kind).unwrap() as u64;

        let joint = transmit_shaped(
            &shaped,
            &ch,
            cfg.symbols_per_cell,
            &mut rng::derived(cfg.seed, &[3, snr_coord, ch_coord]),
        )?;
        rows.push(MiRow {
            snr_db,
            channel: kind,
            arm: MiArm::DdpmShaped,
            mi_bits: mutual_information(&joint)?,
            source_entropy_bits: shaped.entropy_bits(),
            n_symbols: joint.sum(),
            seed: cfg.seed,
            model_checksum: ddpm.checksum(),
        });

        let mut base_rng = rng::derived(cfg.seed, &[4, snr_coord, ch_coord]);
        let tx = uniform.draw(cfg.symbols_per_cell, &mut base_rng)?;
        let rx = ch.corrupt(&tx.iter().map(|&k| c.point(k)).collect::<Vec<_>>(), &mut base_rng);
        let joint = joint_counts(cfg.order, &tx, &dnn.classify(&rx, snr_db)?);
        rows.push(MiRow {
            snr_db,
            channel: kind,
            arm: MiArm::DnnBaseline,
            mi_bits: mutual_information(&joint)?,
            source_entropy_bits: uniform.entropy_bits(),
            n_symbols: joint.sum(),
            seed: cfg.seed,
            model_checksum: dnn.checksum(),
        });
    }
    Ok((shaped, rows))
}

/// MI of DDPM-shaped transmission with nearest-point demapping against
/// uniform transmission decoded by the DNN, for every SNR and channel kind.
///
/// Non-Gaussian channels reuse the distribution shaped with Gaussian
/// synthetic noise; the diffusion model is never retrained.
pub fn run_mi_sweep(ddpm: &ConstellationDdpm, dnn: &BaselineDnn, cfg: &MiExperimentConfig) -> Result<MiSweep> {
    cfg.validate()?;
    ddpm.expect_order(cfg.order)?;
    if dnn.order() != cfg.order {
        return Err(Error::State(format!(
            "baseline was trained on {}-QAM, experiment uses {}-QAM",
            dnn.order(),
            cfg.order
        )));
    }
    let cells = par_map(cfg.snr_grid_db.len(), |i| mi_cell(ddpm, dnn, cfg, cfg.snr_grid_db[i]));
    let mut sweep = MiSweep {
        rows: Vec::new(),
        shaped: Vec::new(),
    };
    for cell in cells {
        let (shaped, rows) = cell?;
        sweep.shaped.push(shaped);
        sweep.rows.extend(rows);
    }
    Ok(sweep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn distribution_validation() {
        assert!(ShapedDistribution::new(4, vec![0.5, 0.5, 0.0, 0.0], 0.0).is_ok());
        assert!(ShapedDistribution::new(4, vec![0.5, 0.5, 0.1, 0.0], 0.0).is_err());
        assert!(ShapedDistribution::new(4, vec![1.1, -0.1, 0.0, 0.0], 0.0).is_err());
        assert!(ShapedDistribution::new(4, vec![1.0], 0.0).is_err());
        let u = ShapedDistribution::uniform(64).unwrap();
        assert!((u.entropy_bits() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn draws_respect_zero_mass() {
        let d = ShapedDistribution::new(4, vec![0.0, 0.25, 0.0, 0.75], 0.0).unwrap();
        let idx = d.draw(4000, &mut seeded(3)).unwrap();
        assert!(idx.iter().all(|&k| k == 1 || k == 3));
        let ones = idx.iter().filter(|&&k| k == 1).count() as f64 / 4000.0;
        assert!((ones - 0.25).abs() < 0.03);
    }

    #[test]
    fn noiseless_joint_is_diagonal() {
        let d = ShapedDistribution::uniform(16).unwrap();
        let ch = ChannelModel::new(ChannelKind::Awgn, 200.0, 0.0);
        let joint = transmit_shaped(&d, &ch, 5000, &mut seeded(1)).unwrap();
        assert_eq!(joint.sum(), 5000);
        for ((a, b), &v) in joint.indexed_iter() {
            assert!(a == b || v == 0);
        }
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = MiExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.snr_grid_db.first(), Some(&-20.0));
        assert_eq!(cfg.snr_grid_db.last(), Some(&30.0));
        assert!(MiExperimentConfig { symbols_per_cell: 0, ..cfg }.validate().is_err());
    }
}
