use serde::{Deserialize, Serialize};

use crate::error::{dim_err, domain_err, Result};

/// Endpoints of a linear beta schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            steps: 100,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

/// Per-step noise variances `beta`, `alpha = 1 - beta` and the cumulative
/// products `alpha_bar`. Steps are indexed `1..=T`; `alpha_bar(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSchedule {
    params: ScheduleParams,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl VarianceSchedule {
    /// Betas interpolated linearly from `beta_start` to `beta_end`, both inclusive.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return domain_err(format!("schedule needs at least 2 steps, got {steps}"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return domain_err(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
            ));
        }
        let beta: Vec<f64> = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
            .collect();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        for a in &alpha {
            let prev = *alpha_bar.last().unwrap();
            alpha_bar.push(prev * a);
        }
        let terminal = alpha_bar[steps];
        if terminal >= 0.5 {
            return domain_err(format!(
                "terminal alpha_bar {terminal:.4} >= 0.5; the schedule does not reach a noise-dominated marginal"
            ));
        }
        Ok(VarianceSchedule {
            params: ScheduleParams {
                steps,
                beta_start,
                beta_end,
            },
            beta,
            alpha,
            alpha_bar,
        })
    }

    pub fn from_params(p: ScheduleParams) -> Result<Self> {
        Self::linear(p.steps, p.beta_start, p.beta_end)
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return domain_err(format!("step {t} outside 1..={}", self.steps()));
        }
        Ok(())
    }

    /// Panics unless `1 <= t <= T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// Valid for `0 <= t <= T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// Variance of the ancestral sampling noise at step `t`:
    /// `(1 - alpha_bar[t-1]) / (1 - alpha_bar[t]) * beta[t]`, zero at `t = 1`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        if t <= 1 {
            return 0.0;
        }
        (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t)) * self.beta(t)
    }

    /// Signal-to-noise ratio of the step-`t` marginal, `alpha_bar / (1 - alpha_bar)`, in dB.
    pub fn step_snr_db(&self, t: usize) -> f64 {
        let ab = self.alpha_bar(t);
        10.0 * (ab / (1.0 - ab)).log10()
    }

    /// Closed-form jump `x_t = sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps`.
    pub fn diffuse(&self, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        self.check_step(t)?;
        if x0.len() != eps.len() {
            return dim_err(format!("x0 has {} entries, eps has {}", x0.len(), eps.len()));
        }
        let (a, b) = (self.alpha_bar(t).sqrt(), (1.0 - self.alpha_bar(t)).sqrt());
        Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
    }

    /// Step whose marginal SNR is closest to `snr_db`; ties go to the larger step.
    pub fn snr_to_timestep(&self, snr_db: f64) -> usize {
        let mut best = 1;
        let mut best_gap = f64::INFINITY;
        for t in 1..=self.steps() {
            let gap = (self.step_snr_db(t) - snr_db).abs();
            if gap <= best_gap {
                best = t;
                best_gap = gap;
            }
        }
        best
    }

    pub(crate) fn validate_step(&self, t: usize) -> Result<()> {
        self.check_step(t)
    }
}
