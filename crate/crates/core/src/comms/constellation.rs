use ndarray::Array2;

use crate::error::{domain_err, Result};

/// Square M-QAM with per-axis Gray labels, scaled to unit average energy.
///
/// Point `k` sits at in-phase level `k / L` and quadrature level `k % L`
/// (`L = sqrt(M)`, levels ascending). Its label is the Gray code of the
/// in-phase level in the high bits followed by the Gray code of the
/// quadrature level.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    points: Vec<[f64; 2]>,
    labels: Vec<u32>,
    index_of_label: Vec<usize>,
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

impl Constellation {
    pub fn qam(order: usize) -> Result<Self> {
        let side = match order {
            4 => 2,
            16 => 4,
            64 => 8,
            _ => return domain_err(format!("unsupported QAM order {order}; expected 4, 16 or 64")),
        };
        let half_bits = (side as u32).trailing_zeros();
        // levels 2i - (L - 1) have mean energy 2 (L^2 - 1) / 3 over both axes
        let scale = 1.0 / (2.0 * (side * side - 1) as f64 / 3.0).sqrt();
        let level = |i: usize| (2.0 * i as f64 - (side - 1) as f64) * scale;
        let mut points = Vec::with_capacity(order);
        let mut labels = Vec::with_capacity(order);
        for i in 0..side {
            for q in 0..side {
                points.push([level(i), level(q)]);
                labels.push(((gray(i) << half_bits) | gray(q)) as u32);
            }
        }
        let mut index_of_label = vec![0; order];
        for (k, &l) in labels.iter().enumerate() {
            index_of_label[l as usize] = k;
        }
        Ok(Constellation {
            order,
            points,
            labels,
            index_of_label,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        self.points[k]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn index_of_label(&self, label: u32) -> usize {
        self.index_of_label[label as usize]
    }

    /// Number of points per axis.
    pub fn side(&self) -> usize {
        1 << (self.bits_per_symbol() / 2)
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / self.order as f64
    }

    /// Bits of `labels[k]`, most significant first, appended to `out`.
    pub fn push_label_bits(&self, k: usize, out: &mut Vec<u8>) {
        let label = self.labels[k];
        let m = self.bits_per_symbol();
        for b in (0..m).rev() {
            out.push(((label >> b) & 1) as u8);
        }
    }

    /// Points of `indices` as an `n x 2` matrix.
    pub fn points_matrix(&self, indices: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((indices.len(), 2));
        for (mut row, &k) in out.rows_mut().into_iter().zip(indices) {
            row[0] = self.points[k][0];
            row[1] = self.points[k][1];
        }
        out
    }
}
