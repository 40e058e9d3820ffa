use ndarray::Array2;

use crate::error::{domain_err, Result};

/// Plug-in mutual information in bits from a joint count table
/// (rows: transmitted index, columns: decided index).
pub fn mutual_information(joint: &Array2<u64>) -> Result<f64> {
    let total: u64 = joint.iter().sum();
    if total == 0 {
        return domain_err("joint count table is empty");
    }
    let n = total as f64;
    let rows: Vec<f64> = joint.rows().into_iter().map(|r| r.sum() as f64 / n).collect();
    let cols: Vec<f64> = joint.columns().into_iter().map(|c| c.sum() as f64 / n).collect();
    let mut mi = 0.0;
    for ((i, j), &c) in joint.indexed_iter() {
        if c > 0 {
            let p = c as f64 / n;
            mi += p * (p / (rows[i] * cols[j])).log2();
        }
    }
    // rounding can leave a tiny negative value for independent tables
    Ok(mi.max(0.0))
}

/// Shannon entropy in bits of a probability vector.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_joint_gives_log2_m() {
        let j = Array2::from_diag(&ndarray::Array1::from_elem(16, 1000u64));
        assert_eq!(mutual_information(&j).unwrap(), 4.0);
    }

    #[test]
    fn product_joint_gives_zero() {
        let row = [1u64, 3, 2, 6];
        let col = [5u64, 1, 4];
        let j = Array2::from_shape_fn((4, 3), |(i, k)| row[i] * col[k]);
        assert!(mutual_information(&j).unwrap().abs() < 1e-12);
    }

    #[test]
    fn binary_symmetric_case() {
        let j = array![[45u64, 5], [5, 45]];
        let hb = -(0.1f64 * 0.1f64.log2() + 0.9 * 0.9f64.log2());
        let mi = mutual_information(&j).unwrap();
        assert!((mi - (1.0 - hb)).abs() < 1e-12);
        assert!((mi - 0.5310).abs() < 1e-3);
    }

    #[test]
    fn empty_table_is_an_error() {
        assert!(mutual_information(&Array2::zeros((4, 4))).is_err());
    }

    #[test]
    fn entropy_of_uniform() {
        assert!((entropy_bits(&[0.25; 4]) - 2.0).abs() < 1e-15);
        assert_eq!(entropy_bits(&[1.0, 0.0]), 0.0);
    }
}
