use super::gradient::input_gradient;
use super::{check_target, AttributionMap, Fill, MethodConfig};
use crate::autodiff::GradMode;
use crate::error::{Error, Result};
use crate::micronet::Model;
use crate::tensor::Tensor;

/// Integrated gradients from `baseline` to `input` with the midpoint rule:
/// `(x − x̄) ⊙ mean_k ∂Φ_t/∂x (x̄ + (k − ½)/steps · (x − x̄))`, channel-summed
/// with signs kept.
pub fn attr_integrated_gradients(
    model: &Model,
    input: &Tensor,
    t: usize,
    baseline: &Tensor,
    steps: usize,
) -> Result<AttributionMap> {
    check_target(model, input, t)?;
    if baseline.shape() != input.shape() {
        return Err(Error::Precondition(format!(
            "baseline shape {:?} differs from input {:?}",
            baseline.shape(),
            input.shape()
        )));
    }
    if steps == 0 {
        return Err(Error::Precondition("integrated gradients needs at least one step".into()));
    }
    let diff = input.zip_map(baseline, |x, b| x - b)?;
    let mut total = vec![0.0; input.len()];
    for k in 0..steps {
        let alpha = (k as f64 + 0.5) / steps as f64;
        let point = baseline.zip_map(&diff, |b, d| b + alpha * d)?;
        let g = input_gradient(model, &point, t, GradMode::Standard)?;
        total.iter_mut().zip(g.data()).for_each(|(s, v)| *s += v);
    }
    let attr: Vec<f64> = total
        .iter()
        .zip(diff.data())
        .map(|(s, d)| d * s / steps as f64)
        .collect();
    let attr = Tensor::new(input.shape().to_vec(), attr)?;
    AttributionMap::new(
        attr.sum_channels()?,
        t,
        MethodConfig::IntegratedGradients {
            baseline: Fill::Reference,
            steps,
        },
    )
}
