//! Interference hazard model for tool choice.
//!
//! With one gold tool among `N` exposed, clarity `alpha` and per-distractor
//! interference `beta`, the chance of picking the gold tool is
//! `alpha / (alpha + beta·(N−1))`. Retrieval exposes `m` tools and finds the
//! gold one with probability `r`.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HazardError {
    #[error("alpha must be positive and beta non-negative (alpha={alpha}, beta={beta})")]
    Coefficients { alpha: f64, beta: f64 },
    #[error("recall {0} is outside [0, 1]")]
    Recall(f64),
    #[error("need 1 <= m <= N (m={m}, N={n})")]
    Sizes { m: u64, n: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardParams {
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
    pub n: u64,
    pub m: u64,
}

impl HazardParams {
    pub fn validate(&self) -> Result<(), HazardError> {
        if !(self.alpha > 0.0 && self.beta >= 0.0) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(HazardError::Coefficients {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(HazardError::Recall(self.r));
        }
        if self.m < 1 || self.m > self.n {
            return Err(HazardError::Sizes { m: self.m, n: self.n });
        }
        Ok(())
    }

    pub fn p_mono(&self) -> f64 {
        p_correct_mono(self.n, self.alpha, self.beta)
    }

    pub fn p_itr(&self) -> f64 {
        p_correct_itr(self.m, self.r, self.alpha, self.beta)
    }
}

/// Probability of choosing the gold tool with all `n` tools exposed.
/// Requires `n >= 1` and `alpha > 0`.
pub fn p_correct_mono(n: u64, alpha: f64, beta: f64) -> f64 {
    debug_assert!(n >= 1 && alpha > 0.0);
    alpha / (alpha + beta * n.saturating_sub(1) as f64)
}

/// `r · p_correct_mono(m)`: retrieval must surface the gold tool, then the
/// model must pick it among `m`.
pub fn p_correct_itr(m: u64, r: f64, alpha: f64, beta: f64) -> f64 {
    r * p_correct_mono(m, alpha, beta)
}

/// Recall at which retrieval with `m` exposed tools exactly matches the
/// monolithic prompt over `n`: `(alpha + beta(m−1)) / (alpha + beta(N−1))`.
/// Below it, retrieval is worse.
pub fn recall_crossover(m: u64, n: u64, alpha: f64, beta: f64) -> f64 {
    p_correct_mono(n, alpha, beta) / p_correct_mono(m, alpha, beta)
}
