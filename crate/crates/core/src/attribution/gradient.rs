use serde::{Deserialize, Serialize};

use super::{check_target, AttributionMap, MethodConfig};
use crate::autodiff::GradMode;
use crate::error::Result;
use crate::micronet::{input_forward, Model};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientVariant {
    Plain,
    InputXGrad,
    Guided,
}

/// `∂Φ_t/∂x` at `input` under `mode`, shaped like the input.
pub(crate) fn input_gradient(model: &Model, input: &Tensor, t: usize, mode: GradMode) -> Result<Tensor> {
    let mut tr = input_forward(model, input, &[])?;
    let root = tr.target_node(t)?;
    tr.input_gradient(root, mode)
}

/// Channel-summed gradient magnitudes.
pub fn attr_gradient(model: &Model, input: &Tensor, t: usize, variant: GradientVariant) -> Result<AttributionMap> {
    check_target(model, input, t)?;
    let mode = match variant {
        GradientVariant::Guided => GradMode::Guided,
        _ => GradMode::Standard,
    };
    let g = input_gradient(model, input, t, mode)?;
    let (scores, options) = match variant {
        GradientVariant::Plain => (g.map(f64::abs), MethodConfig::Gradient),
        GradientVariant::InputXGrad => (g.zip_map(input, |d, x| (d * x).abs())?, MethodConfig::InputXGrad),
        GradientVariant::Guided => (g.map(f64::abs), MethodConfig::GuidedBackprop),
    };
    AttributionMap::new(scores.sum_channels()?, t, options)
}
