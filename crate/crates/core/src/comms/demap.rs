use super::Constellation;
use crate::error::{domain_err, Result};

/// Index of the nearest point; exact ties resolve to the lowest index.
pub fn nearest_index(c: &Constellation, rx: [f64; 2]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, p) in c.points().iter().enumerate() {
        let d = (rx[0] - p[0]).powi(2) + (rx[1] - p[1]).powi(2);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

/// Minimum-distance decisions and the label bits of each decision.
pub fn demap_nearest(rx: &[[f64; 2]], c: &Constellation) -> (Vec<usize>, Vec<u8>) {
    let indices: Vec<usize> = rx.iter().map(|&r| nearest_index(c, r)).collect();
    let bits = indices_to_bits(&indices, c);
    (indices, bits)
}

pub fn indices_to_bits(indices: &[usize], c: &Constellation) -> Vec<u8> {
    let mut bits = Vec::with_capacity(indices.len() * c.bits_per_symbol());
    for &k in indices {
        c.push_label_bits(k, &mut bits);
    }
    bits
}

/// Number of positions where the two streams differ.
pub fn count_bit_errors(tx_bits: &[u8], rx_bits: &[u8]) -> Result<usize> {
    if tx_bits.len() != rx_bits.len() {
        return domain_err(format!("bit streams differ in length: {} vs {}", tx_bits.len(), rx_bits.len()));
    }
    Ok(tx_bits.iter().zip(rx_bits).filter(|(a, b)| a != b).count())
}

/// Hamming distance over length.
pub fn compute_ber(tx_bits: &[u8], rx_bits: &[u8]) -> Result<f64> {
    if tx_bits.is_empty() {
        return domain_err("cannot compute a BER over zero bits");
    }
    Ok(count_bit_errors(tx_bits, rx_bits)? as f64 / tx_bits.len() as f64)
}
