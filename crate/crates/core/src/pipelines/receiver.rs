//! BER of the DDPM receiver against the DNN demapper over an SNR grid.

use serde::{Deserialize, Serialize};

use super::{par_map, BaselineDnn, ConstellationDdpm};
use crate::comms::{count_bit_errors, demap_nearest, indices_to_bits, ChannelKind, ChannelModel, Constellation, SymbolFrame};
use crate::error::{domain_err, Error, Result};
use crate::rng;
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverExperimentConfig {
    pub order: usize,
    pub snr_grid_db: Vec<f64>,
    pub kappa: f64,
    /// Bits per (SNR, channel, receiver) cell, split evenly over the sampling runs.
    pub bits_per_cell: usize,
    pub sampling_runs: usize,
    pub channels: Vec<ChannelKind>,
    pub seed: u64,
}

impl Default for ReceiverExperimentConfig {
    fn default() -> Self {
        ReceiverExperimentConfig {
            order: 16,
            snr_grid_db: (0..9).map(|i| -25.0 + 2.5 * i as f64).collect(),
            kappa: 0.1,
            bits_per_cell: 200_000,
            sampling_runs: 10,
            channels: ChannelKind::ALL.to_vec(),
            seed: 0,
        }
    }
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return domain_err("SNR grid is empty");
    }
    if grid.iter().any(|s| !s.is_finite()) {
        return domain_err("SNR grid holds a non-finite value");
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return domain_err("SNR grid must be strictly increasing");
    }
    Ok(())
}

impl ReceiverExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        Constellation::qam(self.order)?;
        validate_grid(&self.snr_grid_db)?;
        if self.sampling_runs == 0 {
            return domain_err("sampling_runs must be at least 1");
        }
        if self.bits_per_cell == 0 {
            return domain_err("bits_per_cell must be positive");
        }
        if self.channels.is_empty() {
            return domain_err("no channel kinds selected");
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return domain_err(format!("kappa must be non-negative, got {}", self.kappa));
        }
        Ok(())
    }

    /// Symbols per sampling run; the cell total is rounded up to whole symbols per run.
    pub fn symbols_per_run(&self) -> usize {
        let m = self.order.trailing_zeros() as usize;
        self.bits_per_cell.div_ceil(m * self.sampling_runs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiverKind {
    Ddpm,
    Dnn,
}

impl ReceiverKind {
    pub fn name(self) -> &'static str {
        match self {
            ReceiverKind::Ddpm => "ddpm",
            ReceiverKind::Dnn => "dnn",
        }
    }
}

impl std::str::FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpm" => Ok(ReceiverKind::Ddpm),
            "dnn" => Ok(ReceiverKind::Dnn),
            _ => domain_err(format!("unknown receiver {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    pub snr_db: f64,
    pub channel: ChannelKind,
    pub receiver: ReceiverKind,
    pub ber: f64,
    pub n_bits: u64,
    pub n_errors: u64,
    pub seed: u64,
    pub model_checksum: String,
}

fn channel_coord(kind: ChannelKind) -> u64 {
    ChannelKind::ALL.iter().position(|&k| k == kind).unwrap() as u64
}

/// Both receivers decode the same frames; the DDPM draws its own reverse-chain
/// noise per run.
fn run_cell(
    ddpm: &ConstellationDdpm,
    dnn: &BaselineDnn,
    cfg: &ReceiverExperimentConfig,
    snr_db: f64,
    kind: ChannelKind,
) -> Result<[BerRow; 2]> {
    let c = ddpm.constellation();
    let ch = ChannelModel::new(kind, snr_db, cfg.kappa);
    let n = cfg.symbols_per_run();
    let (mut ddpm_err, mut dnn_err, mut bits) = (0u64, 0u64, 0u64);
    for run in 0..cfg.sampling_runs {
        let coords = [snr_db.to_bits(), channel_coord(kind), run as u64];
        let mut frame_rng = rng::derived(cfg.seed, &[0, coords[0], coords[1], coords[2]]);
        let idx: Vec<usize> = (0..n).map(|_| frame_rng.random_range(0..c.order())).collect();
        let mut frame = SymbolFrame::from_indices(idx, &c);
        ch.apply(&mut frame, &mut frame_rng);
        let tx_bits = indices_to_bits(&frame.tx_indices, &c);

        let mut sample_rng = rng::derived(cfg.seed, &[1, coords[0], coords[1], coords[2]]);
        let denoised = ddpm
            .model
            .denoise_observation(frame.rx_matrix().view(), ch.effective_snr_db(), &mut sample_rng)?;
        let points: Vec<[f64; 2]> = denoised.rows().into_iter().map(|r| [r[0], r[1]]).collect();
        let (_, ddpm_bits) = demap_nearest(&points, &c);
        let dnn_bits = indices_to_bits(&dnn.classify(&frame.rx_symbols, snr_db)?, &c);

        ddpm_err += count_bit_errors(&tx_bits, &ddpm_bits)? as u64;
        dnn_err += count_bit_errors(&tx_bits, &dnn_bits)? as u64;
        bits += tx_bits.len() as u64;
    }
    let row = |receiver, n_errors: u64, model_checksum: String| BerRow {
        snr_db,
        channel: kind,
        receiver,
        ber: n_errors as f64 / bits as f64,
        n_bits: bits,
        n_errors,
        seed: cfg.seed,
        model_checksum,
    };
    Ok([
        row(ReceiverKind::Ddpm, ddpm_err, ddpm.checksum()),
        row(ReceiverKind::Dnn, dnn_err, dnn.checksum()),
    ])
}

/// BER table with rows ordered by SNR, then channel, then receiver (DDPM first).
pub fn run_receiver_ber_sweep(
    ddpm: &ConstellationDdpm,
    dnn: &BaselineDnn,
    cfg: &ReceiverExperimentConfig,
) -> Result<Vec<BerRow>> {
    cfg.validate()?;
    ddpm.expect_order(cfg.order)?;
    if dnn.order() != cfg.order {
        return Err(Error::State(format!(
            "baseline was trained on {}-QAM, experiment uses {}-QAM",
            dnn.order(),
            cfg.order
        )));
    }
    let cells: Vec<(f64, ChannelKind)> = cfg
        .snr_grid_db
        .iter()
        .flat_map(|&s| cfg.channels.iter().map(move |&k| (s, k)))
        .collect();
    let results = par_map(cells.len(), |i| run_cell(ddpm, dnn, cfg, cells[i].0, cells[i].1));
    let mut rows = Vec::with_capacity(2 * cells.len());
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// One-sided test of "DDPM BER < DNN BER" on a pair of rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverComparison {
    pub ddpm_ber: f64,
    pub dnn_ber: f64,
    /// `(dnn - ddpm) / dnn`; positive when the DDPM receiver is better.
    pub relative_improvement: f64,
    /// Pooled two-proportion z statistic, positive when the DDPM receiver is better.
    pub z: f64,
    pub significant_95: bool,
}

pub fn compare_receivers(ddpm: &BerRow, dnn: &BerRow) -> Result<ReceiverComparison> {
    if ddpm.receiver != ReceiverKind::Ddpm || dnn.receiver != ReceiverKind::Dnn {
        return domain_err("compare_receivers expects a DDPM row and a DNN row");
    }
    if ddpm.n_bits == 0 || dnn.n_bits == 0 {
        return domain_err("rows carry no bits");
    }
    let (n1, n2) = (ddpm.n_bits as f64, dnn.n_bits as f64);
    let pooled = (ddpm.n_errors + dnn.n_errors) as f64 / (n1 + n2);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)).sqrt();
    let diff = dnn.ber - ddpm.ber;
    let z = if se > 0.0 { diff / se } else { 0.0 };
    let relative_improvement = if dnn.ber > 0.0 { diff / dnn.ber } else { 0.0 };
    Ok(ReceiverComparison {
        ddpm_ber: ddpm.ber,
        dnn_ber: dnn.ber,
        relative_improvement,
        z,
        significant_95: z > 1.6448536269514722,
    })
}
