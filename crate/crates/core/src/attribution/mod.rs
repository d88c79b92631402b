//! Attribution methods under evaluation.
//!
//! Every method returns an [`AttributionMap`] over the input's spatial grid.
//! Gradient-family maps reduce channels by summing absolute values, integrated
//! gradients by summing signed values. Methods that need a notion of feature
//! absence (IG baseline, occlusion fill, extremal start, Shapley coalitions)
//! take it from the scenario reference image passed in [`Context`].

mod gradcam;
mod gradient;
mod integrated;
mod perturbation;
mod shapley;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::micronet::Model;
use crate::region::Region;
use crate::tensor::Tensor;

pub use gradcam::{attr_gradcam, bilinear_upsample};
pub use gradient::{attr_gradient, GradientVariant};
pub use integrated::attr_integrated_gradients;
pub use perturbation::{attr_extremal_greedy, attr_occlusion, ExtremalTrace};
pub use shapley::{attr_shapley_exact, shapley_values, MAX_PLAYERS};

/// Spatial scores for one `(input, target, method)` triple.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributionMap {
    /// `[height, width]`.
    pub scores: Tensor,
    pub method: String,
    pub target: usize,
    pub options: MethodConfig,
}

impl AttributionMap {
    pub(crate) fn new(scores: Tensor, target: usize, options: MethodConfig) -> Result<Self> {
        if scores.shape().len() != 2 || !scores.is_finite() {
            return Err(Error::Precondition(format!(
                "{} produced a non-finite or non-spatial map",
                options.id()
            )));
        }
        Ok(Self {
            scores,
            method: options.id().to_string(),
            target,
            options,
        })
    }

    pub fn height(&self) -> usize {
        self.scores.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.scores.shape()[1]
    }

    /// Sum of scores over `region`.
    pub fn mass(&self, region: &Region) -> f64 {
        region.pixels(self.width()).map(|i| self.scores.data()[i]).sum()
    }
}

/// Where "feature absence" comes from for IG and occlusion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    /// The scenario reference image.
    #[default]
    Reference,
    /// A constant pixel value.
    Constant(f64),
}

impl Fill {
    fn image(&self, reference: &Tensor) -> Tensor {
        match *self {
            Fill::Reference => reference.clone(),
            Fill::Constant(v) => Tensor::full(reference.shape(), v),
        }
    }
}

fn default_ig_steps() -> usize {
    64
}
fn default_window() -> usize {
    8
}
fn default_stride() -> usize {
    4
}
fn default_cell() -> usize {
    4
}
fn default_tau() -> f64 {
    0.1
}

/// A method and its options, as written in run configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    Gradient,
    InputXGrad,
    GuidedBackprop,
    IntegratedGradients {
        #[serde(default)]
        baseline: Fill,
        #[serde(default = "default_ig_steps")]
        steps: usize,
    },
    Gradcam {
        /// Defaults to the last conv layer.
        #[serde(default)]
        layer: Option<String>,
    },
    Occlusion {
        #[serde(default = "default_window")]
        window: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default)]
        fill: Fill,
    },
    ExtremalGreedy {
        #[serde(default = "default_cell")]
        cell: usize,
        /// Maximum revealed cells; defaults to a quarter of the grid.
        #[serde(default)]
        budget: Option<usize>,
        /// Stop once `Φ_t` is within `tau` of its value on the full input.
        #[serde(default = "default_tau")]
        tau: f64,
    },
    /// Players are the scenario patches.
    ShapleyExact,
}

impl MethodConfig {
    /// The eight methods with default options.
    pub fn defaults() -> Vec<MethodConfig> {
        vec![
            MethodConfig::Gradient,
            MethodConfig::InputXGrad,
            MethodConfig::GuidedBackprop,
            MethodConfig::IntegratedGradients {
                baseline: Fill::Reference,
                steps: default_ig_steps(),
            },
            MethodConfig::Gradcam { layer: None },
            MethodConfig::Occlusion {
                window: default_window(),
                stride: default_stride(),
                fill: Fill::Reference,
            },
            MethodConfig::ExtremalGreedy {
                cell: default_cell(),
                budget: None,
                tau: default_tau(),
            },
            MethodConfig::ShapleyExact,
        ]
    }

    pub fn id(&self) -> &'static str {
        match self {
            MethodConfig::Gradient => "gradient",
            MethodConfig::InputXGrad => "input_x_grad",
            MethodConfig::GuidedBackprop => "guided_backprop",
            MethodConfig::IntegratedGradients { .. } => "integrated_gradients",
            MethodConfig::Gradcam { .. } => "gradcam",
            MethodConfig::Occlusion { .. } => "occlusion",
            MethodConfig::ExtremalGreedy { .. } => "extremal_greedy",
            MethodConfig::ShapleyExact => "shapley_exact",
        }
    }

    /// Whether the method reads activations of a chosen layer.
    pub fn has_layer(&self) -> bool {
        matches!(self, MethodConfig::Gradcam { .. })
    }

    pub fn with_layer(&self, layer: &str) -> Result<MethodConfig> {
        match self {
            MethodConfig::Gradcam { .. } => Ok(MethodConfig::Gradcam {
                layer: Some(layer.to_string()),
            }),
            other => Err(Error::Config(format!("{} has no layer option", other.id()))),
        }
    }

    /// Checks options against the model input geometry.
    pub fn validate(&self, model: &Model) -> Result<()> {
        let [_, h, w] = model.input_shape();
        let bad = |m: String| Err(Error::Config(format!("{}: {m}", self.id())));
        match self {
            MethodConfig::IntegratedGradients { steps, .. } if *steps == 0 => bad("steps must be at least 1".into()),
            MethodConfig::Gradcam { layer: Some(l) } if !model.conv_layers().contains(&l.as_str()) => {
                bad(format!("'{l}' is not a conv layer"))
            }
            MethodConfig::Occlusion { window, stride, .. } if *window == 0 || *window > h.min(w) || *stride == 0 => {
                bad(format!("window {window} / stride {stride} do not fit a {h}x{w} image"))
            }
            MethodConfig::ExtremalGreedy { cell, budget, tau } => {
                if *cell == 0 || h % cell != 0 || w % cell != 0 {
                    return bad(format!("cell {cell} does not tile a {h}x{w} image"));
                }
                if budget.is_some_and(|b| b == 0 || b > (h / cell) * (w / cell)) {
                    return bad("budget must lie in 1..=cell count".into());
                }
                if !(*tau >= 0.0) {
                    return bad("tau must be nonnegative".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Scenario-side inputs some methods need.
#[derive(Clone, Copy, Debug)]
pub struct Context<'a> {
    /// The image representing feature absence.
    pub reference: &'a Tensor,
    /// Patch regions, the Shapley players.
    pub players: &'a [Region],
}

pub(crate) fn check_target(model: &Model, input: &Tensor, t: usize) -> Result<()> {
    model.check_input(input)?;
    if t >= model.classes() {
        return Err(Error::Precondition(format!(
            "target {t} out of range for {} classes",
            model.classes()
        )));
    }
    Ok(())
}

/// Runs `method` for target `t` on `input`.
pub fn attribute(
    model: &Model,
    input: &Tensor,
    t: usize,
    method: &MethodConfig,
    ctx: &Context<'_>,
) -> Result<AttributionMap> {
    method.validate(model)?;
    let mut map = match method {
        MethodConfig::Gradient => attr_gradient(model, input, t, GradientVariant::Plain),
        MethodConfig::InputXGrad => attr_gradient(model, input, t, GradientVariant::InputXGrad),
        MethodConfig::GuidedBackprop => attr_gradient(model, input, t, GradientVariant::Guided),
        MethodConfig::IntegratedGradients { baseline, steps } => {
            attr_integrated_gradients(model, input, t, &baseline.image(ctx.reference), *steps)
        }
        MethodConfig::Gradcam { layer } => {
            let convs = model.conv_layers();
            let name = layer.as_deref().unwrap_or(convs[convs.len() - 1]);
            attr_gradcam(model, input, t, name)
        }
        MethodConfig::Occlusion { window, stride, fill } => {
            attr_occlusion(model, input, t, *window, *stride, &fill.image(ctx.reference))
        }
        MethodConfig::ExtremalGreedy { cell, budget, tau } => {
            let [_, h, w] = model.input_shape();
            let budget = budget.unwrap_or(((h / cell) * (w / cell) / 4).max(1));
            Ok(attr_extremal_greedy(model, input, t, ctx.reference, *cell, budget, *tau)?.map)
        }
        MethodConfig::ShapleyExact => attr_shapley_exact(model, input, t, ctx.reference, ctx.players),
    }?;
    map.options = method.clone();
    Ok(map)
}

/// Binary portable graymap of `scores` after min-max normalization. A
/// constant map renders as mid gray.
pub fn to_pgm(scores: &Tensor) -> Result<Vec<u8>> {
    let &[h, w] = scores.shape() else {
        return Err(Error::Precondition(format!(
            "graymap needs a [h, w] tensor, got {:?}",
            scores.shape()
        )));
    };
    let lo = scores.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(scores.data().iter().map(|&v| {
        let u = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        (u * 255.0).round() as u8
    }));
    Ok(bytes)
}
