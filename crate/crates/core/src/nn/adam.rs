//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl AdamState {
    /// Fresh state for parameter blocks of the given lengths.
    pub fn new(block_lens: &[usize], config: AdamConfig) -> Self {
        AdamState {
            config,
            first_moment: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }
}

/// Applies one Adam update in place.
///
/// Gradients are checked for finiteness before anything is written, so a bad
/// batch leaves both parameters and state untouched.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return dim_err(format!(
            "{} parameter blocks, {} gradient blocks, {} moment blocks",
            params.len(),
            grads.len(),
            state.first_moment.len()
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first_moment[i].len() {
            return dim_err(format!("block {i}: parameter/gradient/moment lengths differ"));
        }
    }
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }

    state.step_count += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step_count as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for j in 0..p.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64) -> AdamConfig {
        AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut state = AdamState::new(&[3], cfg(0.1));
        adam_step(&mut [&mut p[..]], &[&[0.0, 0.0, 0.0][..]], &mut state).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.0];
        let mut state = AdamState::new(&[1], cfg(0.1));
        adam_step(&mut [&mut p[..]], &[&[1.0][..]], &mut state).unwrap();
        // m_hat = 1, v_hat = 1
        assert!((p[0] - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn two_steps_match_hand_recurrence() {
        let mut p = vec![0.0];
        let mut state = AdamState::new(&[1], cfg(0.1));
        for _ in 0..2 {
            adam_step(&mut [&mut p[..]], &[&[1.0][..]], &mut state).unwrap();
        }
        // m2 = 0.9 * 0.1 + 0.1, v2 = 0.999 * 0.001 + 0.001
        assert!((state.first_moment()[0][0] - 0.19).abs() < 1e-15);
        assert!((state.second_moment()[0][0] - 0.001999).abs() < 1e-15);
        assert_eq!(state.step_count(), 2);
        // both bias-corrected moments equal 1, so each step is -lr / (1 + eps)
        assert!((p[0] + 0.2 / (1.0 + 1e-8)).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = vec![0.0, 1.0];
        let mut state = AdamState::new(&[2], cfg(0.1));
        assert!(matches!(
            adam_step(&mut [&mut p[..]], &[&[1.0][..]], &mut state),
            Err(Error::Dimension(_))
        ));
        let mut wrong = AdamState::new(&[3], cfg(0.1));
        assert!(adam_step(&mut [&mut p[..]], &[&[1.0, 1.0][..]], &mut wrong).is_err());
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut p = vec![0.5];
        let mut state = AdamState::new(&[1], cfg(0.1));
        assert!(matches!(
            adam_step(&mut [&mut p[..]], &[&[f64::NAN][..]], &mut state),
            Err(Error::Numeric(_))
        ));
        assert_eq!(p, vec![0.5]);
        assert_eq!(state.step_count(), 0);
    }
}
