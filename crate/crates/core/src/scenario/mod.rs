//! Controlled evaluation inputs built by optimizing image patches against the
//! classifier.
//!
//! A scenario starts from a clipped-noise reference image `X` and one or two
//! patch slots. Each slot is optimized for its own generation objective plus
//! squared constraints on coalition logits, where `X_S` denotes `X` with the
//! patches in `S` pasted in. Once the constraints hold to `epsilon_null` and
//! the patches move their target logits by at least `delta`, the instance is
//! marked converged and its contribution structure is known by construction.

mod focal;
mod generate;
mod location;
mod losses;
mod persist;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::micronet::PriorConfig;
use crate::region::{pairwise_disjoint, Region};
use crate::tensor::Tensor;

pub use focal::{kappa_generation, kappa_ratio, FocalConfig, FocalState};
pub use generate::{gen_class_double, gen_class_single, gen_null_feature, gen_saturation, generate};
pub use location::{randomize_patch_location, LocationSchedule};
pub use losses::{loss_const_target, loss_max_target, soft_target};
pub use persist::{load_instance, save_instance, verify_residuals, Manifest, MANIFEST_VERSION};
pub(crate) use persist::{sha256_hex, write_atomic};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Null,
    ClassSingle,
    ClassDouble,
    Saturation,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Null,
        ScenarioKind::ClassSingle,
        ScenarioKind::ClassDouble,
        ScenarioKind::Saturation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Null => "null",
            ScenarioKind::ClassSingle => "class_single",
            ScenarioKind::ClassDouble => "class_double",
            ScenarioKind::Saturation => "saturation",
        }
    }

    /// Whether the scenario uses a second class `b`.
    pub fn needs_second_class(self) -> bool {
        self != ScenarioKind::Saturation
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// Patch pixels are optimized directly and clamped to the pixel range.
    #[default]
    Direct,
    /// Patch pixels are the output of a per-patch [`crate::micronet::PriorDecoder`].
    DeepPrior,
}

/// Generation objective for the first term of each slot's loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationLoss {
    /// Maximize the target logit.
    #[default]
    Max,
    /// Match the target softmax confidence.
    Const,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchSpec {
    pub name: String,
    pub region: Region,
    pub parameterization: Parameterization,
    /// `[C, height, width]`.
    pub pixels: Tensor,
}

impl PatchSpec {
    pub fn new(name: &str, region: Region, parameterization: Parameterization, pixels: Tensor) -> Result<Self> {
        let s = pixels.shape();
        if s.len() != 3 || s[1] != region.height || s[2] != region.width {
            return Err(Error::Precondition(format!(
                "patch {name}: pixels {:?} do not match region {}x{}",
                s, region.height, region.width
            )));
        }
        Ok(Self {
            name: name.to_string(),
            region,
            parameterization,
            pixels,
        })
    }
}

/// Pixel range images are clipped to after composition.
pub const PIXEL_RANGE: (f64, f64) = (-1.0, 1.0);

/// Copy of `x` with each patch written over its region and the result clipped
/// to [`PIXEL_RANGE`].
pub fn compose(x: &Tensor, patches: &[&PatchSpec]) -> Result<Tensor> {
    let [c, h, w] = match *x.shape() {
        [c, h, w] => [c, h, w],
        _ => return Err(Error::Precondition(format!("compose expects [C, H, W], got {:?}", x.shape()))),
    };
    let regions: Vec<Region> = patches.iter().map(|p| p.region).collect();
    for (p, r) in patches.iter().zip(&regions) {
        if !r.fits(h, w) {
            return Err(Error::Precondition(format!(
                "patch {} at {:?} lies outside the {h}x{w} image",
                p.name, r
            )));
        }
        if p.pixels.shape() != [c, r.height, r.width] {
            return Err(Error::Precondition(format!(
                "patch {} has shape {:?}, expected [{c}, {}, {}]",
                p.name,
                p.pixels.shape(),
                r.height,
                r.width
            )));
        }
    }
    if !pairwise_disjoint(&regions) {
        return Err(Error::Precondition("patches overlap".into()));
    }
    let mut data = x.data().to_vec();
    for p in patches {
        let r = p.region;
        let src = p.pixels.data();
        for ch in 0..c {
            for i in 0..r.height {
                let dst = ch * h * w + (r.row + i) * w + r.col;
                let s = ch * r.height * r.width + i * r.width;
                data[dst..dst + r.width].copy_from_slice(&src[s..s + r.width]);
            }
        }
    }
    let (lo, hi) = PIXEL_RANGE;
    for v in &mut data {
        *v = v.clamp(lo, hi);
    }
    Ok(Tensor::new(x.shape().to_vec(), data)?)
}

/// Bitmask over patch slots; bit `i` set means slot `i` is present.
pub type Coalition = u32;

/// `|Φ_class(X_with) − Φ_class(X_without)|` over two coalitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub class: usize,
    pub with: Coalition,
    pub without: Coalition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub term: Term,
    pub value: f64,
    /// False for residuals that are reported but not optimized.
    pub constrained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrengthRecord {
    pub term: Term,
    /// Signed gain `Φ(X_with) − Φ(X_without)`.
    pub value: f64,
}

/// Loss curves sampled every `every` steps, one series per slot.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub every: usize,
    pub losses: BTreeMap<String, Vec<f64>>,
    /// Step at which the locations last changed.
    pub last_relocation: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSeeds {
    pub job: u64,
    pub reference: u64,
    pub locations: u64,
    pub patches: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioInstance {
    pub id: String,
    pub kind: ScenarioKind,
    pub target_a: usize,
    pub target_b: Option<usize>,
    /// Target confidence for const-target generation terms.
    pub confidence: Option<f64>,
    pub reference: Tensor,
    /// In slot order; coalition bit `i` refers to `patches[i]`.
    pub patches: Vec<PatchSpec>,
    pub residuals: BTreeMap<String, ResidualRecord>,
    pub strengths: BTreeMap<String, StrengthRecord>,
    pub epsilon_null: f64,
    pub delta: f64,
    pub converged: bool,
    pub steps: usize,
    pub trace: OptimizerTrace,
    pub seeds: ScenarioSeeds,
}

impl ScenarioInstance {
    pub fn patch(&self, name: &str) -> Option<&PatchSpec> {
        self.patches.iter().find(|p| p.name == name)
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.patches.iter().position(|p| p.name == name)
    }

    pub fn compose(&self, coalition: Coalition) -> Result<Tensor> {
        let chosen: Vec<&PatchSpec> = self
            .patches
            .iter()
            .enumerate()
            .filter(|(i, _)| coalition & (1 << i) != 0)
            .map(|(_, p)| p)
            .collect();
        compose(&self.reference, &chosen)
    }

    /// Every patch present.
    pub fn full_coalition(&self) -> Coalition {
        (1 << self.patches.len()) - 1
    }

    pub fn coalition_label(&self, coalition: Coalition) -> String {
        coalition_label(&self.patches.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(), coalition)
    }
}

pub(crate) fn coalition_label(names: &[&str], coalition: Coalition) -> String {
    let inner: Vec<&str> = names
        .iter()
        .enumerate()
        .filter(|(i, _)| coalition & (1 << i) != 0)
        .map(|(_, n)| *n)
        .collect();
    format!("{{{}}}", inner.join(","))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// `[height, width]` of every patch.
    pub patch_size: [usize; 2],
    pub parameterization: Parameterization,
    pub epsilon_null: f64,
    pub delta: f64,
    /// Target softmax confidence for const-target generation.
    pub confidence: f64,
    /// Generation loss for null and class scenarios; saturation always uses
    /// the const-target form.
    pub generation_loss: GenerationLoss,
    /// Defaults to 0.05 (direct) or 0.01 (deep prior).
    pub learning_rate: Option<f64>,
    pub momentum: f64,
    pub max_steps: usize,
    /// Steps of pure generation before constraints are switched on.
    pub warmup_steps: usize,
    /// Fresh locations every this many steps; `None` keeps the first draw.
    pub relocate_every: Option<usize>,
    /// Last step at which relocation may happen; `None` means no limit.
    pub relocate_until: Option<usize>,
    /// Patch corners are drawn on this pixel grid.
    pub location_grid: usize,
    /// Standard deviation of the clipped normal reference image.
    pub reference_noise: f64,
    pub focal: FocalConfig,
    pub prior: PriorConfig,
    /// Loss curve sampling interval.
    pub trace_every: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            patch_size: [12, 12],
            parameterization: Parameterization::default(),
            epsilon_null: 0.05,
            delta: 2.0,
            confidence: 0.9,
            generation_loss: GenerationLoss::default(),
            learning_rate: None,
            momentum: 0.9,
            max_steps: 2000,
            warmup_steps: 200,
            relocate_every: Some(25),
            relocate_until: Some(400),
            location_grid: 4,
            reference_noise: 0.5,
            focal: FocalConfig::default(),
            prior: PriorConfig::default(),
            trace_every: 10,
        }
    }
}

impl ScenarioConfig {
    pub fn learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.parameterization {
            Parameterization::Direct => 0.05,
            Parameterization::DeepPrior => 0.01,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.patch_size.contains(&0) {
            return bad("patch_size must be positive");
        }
        if !(self.epsilon_null > 0.0) || !(self.delta > 0.0) {
            return bad("epsilon_null and delta must be positive");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad("confidence must lie in (0, 1)");
        }
        if !(self.learning_rate() > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("learning_rate must be positive and momentum in [0, 1)");
        }
        if self.relocate_every == Some(0) || self.location_grid == 0 || self.trace_every == 0 {
            return bad("relocate_every, location_grid and trace_every must be positive");
        }
        if !(self.reference_noise >= 0.0) {
            return bad("reference_noise must be nonnegative");
        }
        self.focal.validate()
    }
}
