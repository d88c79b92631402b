//! Scores computed from attribution maps over scenario patches.
//!
//! Ratio metrics work on nonnegative mass, so signed maps are rectified first
//! (see [`Preprocess`]). Each ratio returns its numerator and denominator so
//! stored samples can be audited. Correlation metrics are Pearson
//! coefficients across scenario instances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::region::Region;
use crate::tensor::Tensor;

/// Why a metric has no value for some input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Undefined {
    #[error("zero denominator mass")]
    ZeroMass,
    #[error("constant sequence")]
    Constant,
    #[error("fewer than three samples")]
    TooFewSamples,
    #[error("sequences differ in length")]
    LengthMismatch,
}

/// How signed maps become nonnegative mass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocess {
    #[default]
    PositivePart,
    Absolute,
}

impl Preprocess {
    pub fn apply(self, map: &Tensor) -> Tensor {
        match self {
            Preprocess::PositivePart => map.map(|v| v.max(0.0)),
            Preprocess::Absolute => map.map(f64::abs),
        }
    }
}

/// `value = numerator / denominator`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
}

impl Ratio {
    pub fn new(numerator: f64, denominator: f64) -> Result<Self, Undefined> {
        if !(denominator > 0.0) {
            return Err(Undefined::ZeroMass);
        }
        Ok(Self {
            value: numerator / denominator,
            numerator,
            denominator,
        })
    }
}

fn width(map: &Tensor) -> usize {
    map.shape()[map.shape().len() - 1]
}

fn mass(map: &Tensor, region: &Region) -> f64 {
    region.pixels(width(map)).map(|i| map.data()[i]).sum()
}

/// Share of the total mass that falls inside `f_null`. Lower is better.
pub fn null_feature_metric(s_a: &Tensor, f_null: &Region) -> Result<Ratio, Undefined> {
    Ratio::new(mass(s_a, f_null), s_a.sum())
}

/// `Σ_{f_a ∪ f_b} min(S_a, S_b) / (Σ_{f_a} S_a + Σ_{f_b} S_b)`. Lower is better.
pub fn class_sensitivity_double(s_a: &Tensor, s_b: &Tensor, f_a: &Region, f_b: &Region) -> Result<Ratio, Undefined> {
    let w = width(s_a);
    let shared = |r: &Region| -> f64 { r.pixels(w).map(|i| s_a.data()[i].min(s_b.data()[i])).sum() };
    Ratio::new(shared(f_a) + shared(f_b), mass(s_a, f_a) + mass(s_b, f_b))
}

/// Mean score inside `f` over mean score outside it.
pub fn in_out_ratio(s: &Tensor, f: &Region) -> Result<Ratio, Undefined> {
    let inside = mass(s, f);
    let outside = s.sum() - inside;
    let n_out = (s.len() - f.area()) as f64;
    Ratio::new(inside / f.area() as f64, outside / n_out)
}

/// Pearson correlation of `ratio_a` against `ratio_b` across samples.
/// Higher means the method ignores the target class.
pub fn class_sensitivity_single(pairs: &[(f64, f64)]) -> Result<f64, Undefined> {
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    pearson(&a, &b)
}

/// Pearson correlation of the masses on the two saturating patches. Higher
/// means credit is shared between them.
pub fn saturation_corr(masses: &[(f64, f64)]) -> Result<f64, Undefined> {
    class_sensitivity_single(masses)
}

/// Sample Pearson coefficient, clamped to `[-1, 1]`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, Undefined> {
    if xs.len() != ys.len() {
        return Err(Undefined::LengthMismatch);
    }
    if xs.len() < 3 {
        return Err(Undefined::TooFewSamples);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Undefined::Constant);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Per-sample metric rows written to `samples.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Null-feature share of `S_a` (null scenarios).
    NullFeature,
    /// Pixel-wise shared mass of `S_a` and `S_b` (double-feature scenarios).
    ClassDouble,
    /// In/out ratio of `S_a` on `f_a` (single-feature scenarios).
    InOutA,
    /// In/out ratio of `S_b` on `f_a` (single-feature scenarios).
    InOutB,
    /// `Σ_{f_a1} S_a` over the total (saturation scenarios).
    PatchMass1,
    /// `Σ_{f_a2} S_a` over the total (saturation scenarios).
    PatchMass2,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::NullFeature => "null_feature",
            MetricKind::ClassDouble => "class_double",
            MetricKind::InOutA => "in_out_a",
            MetricKind::InOutB => "in_out_b",
            MetricKind::PatchMass1 => "patch_mass_1",
            MetricKind::PatchMass2 => "patch_mass_2",
        }
    }
}

/// One metric evaluation on one scenario instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub scenario_id: String,
    pub method: String,
    pub layer: Option<String>,
    pub metric: MetricKind,
    /// `numerator / denominator`, or `None` when undefined.
    pub value: Option<f64>,
    pub numerator: f64,
    pub denominator: f64,
    pub converged: bool,
    pub undefined: Option<Undefined>,
}

impl MetricSample {
    pub fn new(
        scenario_id: &str,
        method: &str,
        layer: Option<&str>,
        metric: MetricKind,
        ratio: Result<Ratio, Undefined>,
        converged: bool,
    ) -> Self {
        let (value, numerator, denominator, undefined) = match ratio {
            Ok(r) => (Some(r.value), r.numerator, r.denominator, None),
            Err(u) => (None, 0.0, 0.0, Some(u)),
        };
        Self {
            scenario_id: scenario_id.to_string(),
            method: method.to_string(),
            layer: layer.map(str::to_string),
            metric,
            value,
            numerator,
            denominator,
            converged,
            undefined,
        }
    }

    /// Included in aggregates: converged and defined.
    pub fn usable(&self) -> bool {
        self.converged && self.value.is_some()
    }
}

/// Share of the positive mass `S_a` places on its larger saturating patch;
/// 1 when all patch mass sits on one patch.
pub fn concentration(mass_1: f64, mass_2: f64) -> Result<Ratio, Undefined> {
    Ratio::new(mass_1.max(mass_2), mass_1 + mass_2)
}
