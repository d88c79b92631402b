use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adaptive loss weights from exponentially averaged term difficulties.
///
/// Generation terms are weighted `(1 − κ̂_L)^gamma`, constraint terms
/// `constraint_scale · κ̂_c^gamma` (see [`FocalState::generation_weight`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FocalConfig {
    pub alpha: f64,
    pub initial: f64,
    pub gamma: f64,
    pub constraint_scale: f64,
    /// Lower guard on the ratio denominator.
    pub guard: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            initial: 0.5,
            gamma: 0.0,
            constraint_scale: 3.0,
            guard: 1e-3,
        }
    }
}

impl FocalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.initial) {
            return Err(Error::Config("focal alpha and initial must lie in [0, 1]".into()));
        }
        if !(self.gamma >= 0.0) || !(self.constraint_scale > 0.0) || !(self.guard > 0.0) {
            return Err(Error::Config("focal gamma, constraint_scale and guard must be positive".into()));
        }
        Ok(())
    }
}

/// Softmax probability of class `t`, the generation-term difficulty.
pub fn kappa_generation(logits: &[f64], t: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
    (logits[t] - m).exp() / z
}

/// `tanh(|with − without| / max(min(|with|, |without|), guard))`.
pub fn kappa_ratio(with: f64, without: f64, guard: f64) -> f64 {
    let denom = with.abs().min(without.abs()).max(guard);
    ((with - without).abs() / denom).tanh()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalState {
    pub alpha: f64,
    pub initial: f64,
    pub ema: BTreeMap<String, f64>,
    pub steps: usize,
}

impl FocalState {
    pub fn new(config: &FocalConfig) -> Self {
        Self {
            alpha: config.alpha,
            initial: config.initial,
            ema: BTreeMap::new(),
            steps: 0,
        }
    }

    /// `κ̂ ← α κ + (1 − α) κ̂`, with unseen terms starting at the initial value.
    pub fn update(&mut self, term: &str, kappa: f64) -> f64 {
        let alpha = self.alpha;
        let e = self.ema.entry(term.to_string()).or_insert(self.initial);
        *e = alpha * kappa.clamp(0.0, 1.0) + (1.0 - alpha) * *e;
        *e
    }

    pub fn tick(&mut self) {
        self.steps += 1;
    }

    pub fn get(&self, term: &str) -> f64 {
        self.ema.get(term).copied().unwrap_or(self.initial)
    }

    pub fn generation_weight(config: &FocalConfig, kappa_hat: f64) -> f64 {
        (1.0 - kappa_hat).max(0.0).powf(config.gamma)
    }

    pub fn constraint_weight(config: &FocalConfig, kappa_hat: f64) -> f64 {
        config.constraint_scale * kappa_hat.powf(config.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ema_first_step() {
        let mut s = FocalState::new(&FocalConfig::default());
        assert!((s.update("L", 1.0) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn ema_converges_geometrically() {
        let mut s = FocalState::new(&FocalConfig::default());
        let mut gap = (s.get("c") - 0.2f64).abs();
        for _ in 0..200 {
            let v = s.update("c", 0.2);
            let g = (v - 0.2).abs();
            assert!(g <= 0.9 * gap + 1e-15);
            gap = g;
        }
        assert!(gap < 1e-9);
    }

    #[test]
    fn ratio_kappa_zero_without_change() {
        assert_eq!(kappa_ratio(1.7, 1.7, 1e-3), 0.0);
        assert!(kappa_ratio(0.0, 0.0, 1e-3) == 0.0);
        assert!(kappa_ratio(1e-9, 1.0, 1e-3) <= 1.0);
    }

    #[test]
    fn generation_kappa_is_softmax() {
        assert!((kappa_generation(&[0.0, 0.0], 0) - 0.5).abs() < 1e-15);
    }
}
