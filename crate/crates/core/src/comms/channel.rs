use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Constellation;
use crate::error::{domain_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelKind {
    #[serde(rename = "awgn")]
    Awgn,
    #[serde(rename = "laplacian")]
    Laplacian,
    /// AWGN plus aggregate transceiver distortion of power `kappa^2` times the signal power.
    #[serde(rename = "hwi")]
    HardwareImpairedAwgn,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [
        ChannelKind::Awgn,
        ChannelKind::Laplacian,
        ChannelKind::HardwareImpairedAwgn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Laplacian => "laplacian",
            ChannelKind::HardwareImpairedAwgn => "hwi",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChannelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown channel kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub kind: ChannelKind,
    pub snr_db: f64,
    pub kappa: f64,
}

/// Transmitted constellation indices, their points and what the receiver saw.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub tx_indices: Vec<usize>,
    pub tx_symbols: Vec<[f64; 2]>,
    pub rx_symbols: Vec<[f64; 2]>,
}

impl SymbolFrame {
    /// Noiseless frame: `rx_symbols` starts as a copy of `tx_symbols`.
    pub fn from_indices(indices: Vec<usize>, c: &Constellation) -> Self {
        let tx_symbols: Vec<[f64; 2]> = indices.iter().map(|&k| c.point(k)).collect();
        SymbolFrame {
            rx_symbols: tx_symbols.clone(),
            tx_indices: indices,
            tx_symbols,
        }
    }

    pub fn len(&self) -> usize {
        self.tx_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx_indices.is_empty()
    }

    pub fn rx_matrix(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rx_symbols.len(), 2));
        for (mut row, p) in out.rows_mut().into_iter().zip(&self.rx_symbols) {
            row[0] = p[0];
            row[1] = p[1];
        }
        out
    }
}

/// Maps consecutive `log2 M`-bit groups (MSB first) through the labels.
pub fn modulate(bits: &[u8], c: &Constellation) -> Result<SymbolFrame> {
    let m = c.bits_per_symbol();
    if bits.len() % m != 0 {
        return domain_err(format!("{} bits is not a multiple of {m} bits per symbol", bits.len()));
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return domain_err(format!("bit value {b} is not 0 or 1"));
    }
    let indices = bits
        .chunks(m)
        .map(|g| c.index_of_label(g.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32)))
        .collect();
    Ok(SymbolFrame::from_indices(indices, c))
}

fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

impl ChannelModel {
    pub fn new(kind: ChannelKind, snr_db: f64, kappa: f64) -> Self {
        ChannelModel { kind, snr_db, kappa }
    }

    /// Total complex noise variance for unit signal energy, `10^(-snr/10)`.
    pub fn noise_power(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    /// Noise power plus the distortion power of a unit-energy signal.
    pub fn effective_noise_power(&self) -> f64 {
        match self.kind {
            ChannelKind::HardwareImpairedAwgn => self.noise_power() + self.kappa * self.kappa,
            _ => self.noise_power(),
        }
    }

    pub fn effective_snr_db(&self) -> f64 {
        -10.0 * self.effective_noise_power().log10()
    }

    /// Received symbols for `tx`.
    ///
    /// All additive noise is drawn first, then the distortion term, so a zero
    /// `kappa` consumes the generator exactly like plain AWGN.
    pub fn corrupt<R: Rng + ?Sized>(&self, tx: &[[f64; 2]], rng: &mut R) -> Vec<[f64; 2]> {
        let sigma2 = self.noise_power();
        let mut rx = tx.to_vec();
        match self.kind {
            ChannelKind::Laplacian => {
                // per-quadrature variance 2 b^2 = sigma^2 / 2
                let b = sigma2.sqrt() / 2.0;
                for r in &mut rx {
                    r[0] += laplace(b, rng);
                    r[1] += laplace(b, rng);
                }
            }
            ChannelKind::Awgn | ChannelKind::HardwareImpairedAwgn => {
                let std = (sigma2 / 2.0).sqrt();
                for r in &mut rx {
                    r[0] += std * rng.sample::<f64, _>(StandardNormal);
                    r[1] += std * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        if self.kind == ChannelKind::HardwareImpairedAwgn && self.kappa > 0.0 && !tx.is_empty() {
            let energy = tx.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / tx.len() as f64;
            let std = (self.kappa * self.kappa * energy / 2.0).sqrt();
            for r in &mut rx {
                r[0] += std * rng.sample::<f64, _>(StandardNormal);
                r[1] += std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        rx
    }

    /// Overwrites `frame.rx_symbols`; transmit fields are left untouched.
    pub fn apply<R: Rng + ?Sized>(&self, frame: &mut SymbolFrame, rng: &mut R) {
        frame.rx_symbols = self.corrupt(&frame.tx_symbols, rng);
    }
}

pub fn apply_channel<R: Rng + ?Sized>(mut frame: SymbolFrame, ch: &ChannelModel, rng: &mut R) -> SymbolFrame {
    ch.apply(&mut frame, rng);
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn empty_bits_give_empty_frame() {
        let c = Constellation::qam(16).unwrap();
        let f = modulate(&[], &c).unwrap();
        assert!(f.is_empty() && f.rx_symbols.is_empty());
    }

    #[test]
    fn label_bits_map_to_their_index() {
        let c = Constellation::qam(16).unwrap();
        for k in 0..16 {
            let mut bits = Vec::new();
            c.push_label_bits(k, &mut bits);
            let f = modulate(&bits, &c).unwrap();
            assert_eq!(f.tx_indices, vec![k]);
            assert_eq!(f.tx_symbols, vec![c.point(k)]);
        }
    }

    #[test]
    fn bad_bit_streams() {
        let c = Constellation::qam(16).unwrap();
        assert!(modulate(&[0, 1, 1], &c).is_err());
        assert!(modulate(&[0, 1, 2, 0], &c).is_err());
    }

    #[test]
    fn zero_kappa_matches_awgn_exactly() {
        let c = Constellation::qam(16).unwrap();
        let f = SymbolFrame::from_indices((0..500).map(|i| i % 16).collect(), &c);
        let awgn = ChannelModel::new(ChannelKind::Awgn, 3.0, 0.0).corrupt(&f.tx_symbols, &mut seeded(8));
        let hwi = ChannelModel::new(ChannelKind::HardwareImpairedAwgn, 3.0, 0.0).corrupt(&f.tx_symbols, &mut seeded(8));
        assert_eq!(awgn, hwi);
    }

    #[test]
    fn apply_keeps_transmit_fields() {
        let c = Constellation::qam(4).unwrap();
        let f = SymbolFrame::from_indices(vec![0, 3, 2, 1], &c);
        let g = apply_channel(f.clone(), &ChannelModel::new(ChannelKind::Laplacian, 0.0, 0.0), &mut seeded(1));
        assert_eq!(f.tx_indices, g.tx_indices);
        assert_eq!(
            f.tx_symbols.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>(),
            g.tx_symbols.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(g.rx_symbols, g.tx_symbols);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ChannelKind::ALL {
            assert_eq!(k.name().parse::<ChannelKind>().unwrap(), k);
        }
        assert!("rayleigh".parse::<ChannelKind>().is_err());
    }

    #[test]
    fn effective_noise_folds_in_distortion() {
        let ch = ChannelModel::new(ChannelKind::HardwareImpairedAwgn, 10.0, 0.1);
        assert!((ch.effective_noise_power() - 0.11).abs() < 1e-12);
        let plain = ChannelModel::new(ChannelKind::Awgn, 10.0, 0.1);
        assert!((plain.effective_snr_db() - 10.0).abs() < 1e-12);
    }
}
