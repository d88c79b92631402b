use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::attribution::MethodConfig;
use crate::error::{Error, Result};
use crate::metrics::Preprocess;
use crate::micronet::synthetic::SyntheticConfig;
use crate::micronet::{build_classifier, train_synthetic, ArchConfig, Model, TrainConfig, TrainReport};
use crate::scenario::{ScenarioConfig, ScenarioKind};

/// Where the classifier comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    /// Untrained, seeded weights.
    Build {
        #[serde(default)]
        arch: ArchConfig,
        #[serde(default)]
        seed: u64,
    },
    /// A model container written by [`Model::save`].
    Load { path: PathBuf },
    /// Seeded build followed by training on the synthetic texture task.
    Train {
        #[serde(default)]
        arch: ArchConfig,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        data: SyntheticConfig,
        #[serde(default)]
        train: TrainConfig,
        #[serde(default = "default_epochs")]
        epochs: usize,
    },
}

fn default_epochs() -> usize {
    5
}

impl Default for ModelSource {
    fn default() -> Self {
        ModelSource::Train {
            arch: ArchConfig::default(),
            seed: 7,
            data: SyntheticConfig::default(),
            train: TrainConfig::default(),
            epochs: default_epochs(),
        }
    }
}

impl ModelSource {
    pub fn materialize(&self) -> Result<(Model, Option<TrainReport>)> {
        match self {
            ModelSource::Build { arch, seed } => Ok((build_classifier(arch, *seed)?, None)),
            ModelSource::Load { path } => Ok((Model::load(path)?, None)),
            ModelSource::Train {
                arch,
                seed,
                data,
                train,
                epochs,
            } => {
                let arch = ArchConfig {
                    classes: data.classes(),
                    ..arch.clone()
                };
                let model = build_classifier(&arch, *seed)?;
                let (model, report) = train_synthetic(&model, data, train, *epochs, *seed)?;
                Ok((model, Some(report)))
            }
        }
    }
}

/// One family of scenario jobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub count: usize,
    #[serde(default)]
    pub config: ScenarioConfig,
}

/// Everything a run needs. Serialized verbatim into `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSource,
    pub scenarios: Vec<ScenarioSpec>,
    pub methods: Vec<MethodConfig>,
    /// Layers for layer-selectable methods; empty means each method's default.
    pub layers: Vec<String>,
    pub preprocess: Preprocess,
    /// Write each scenario's manifest and blobs under `scenarios/`.
    pub save_scenarios: bool,
    /// Render heatmaps for the first `heatmaps` scenarios of each family.
    pub heatmaps: usize,
    /// Output directory; the command line takes precedence.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    /// The default battery: 50 null, 25 + 25 class-sensitivity and 50
    /// saturation scenarios against the trained texture model, all eight
    /// methods.
    fn default() -> Self {
        let spec = |kind, count| ScenarioSpec {
            kind,
            count,
            config: ScenarioConfig::default(),
        };
        Self {
            seed: 0,
            model: ModelSource::default(),
            scenarios: vec![
                spec(ScenarioKind::Null, 50),
                spec(ScenarioKind::ClassSingle, 25),
                spec(ScenarioKind::ClassDouble, 25),
                spec(ScenarioKind::Saturation, 50),
            ],
            methods: MethodConfig::defaults(),
            layers: Vec::new(),
            preprocess: Preprocess::PositivePart,
            save_scenarios: true,
            heatmaps: 2,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that does not need the model.
    pub fn validate(&self) -> Result<()> {
        for spec in &self.scenarios {
            spec.config
                .validate()
                .map_err(|e| Error::Config(format!("{} scenarios: {e}", spec.kind.as_str())))?;
        }
        if self.methods.is_empty() && self.scenarios.iter().any(|s| s.count > 0) {
            return Err(Error::Config("no attribution methods configured".into()));
        }
        let mut ids: Vec<String> = self.methods.iter().map(|m| format!("{m:?}")).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate method entries".into()));
        }
        if !self.layers.is_empty() && !self.methods.iter().any(MethodConfig::has_layer) {
            return Err(Error::Config("layers given but no method takes a layer".into()));
        }
        Ok(())
    }

    /// Checks method options and layers against the model.
    pub fn validate_for(&self, model: &Model) -> Result<()> {
        for m in &self.methods {
            m.validate(model)?;
        }
        let convs = model.conv_layers();
        for l in &self.layers {
            if model.layer(l).is_none() {
                return Err(Error::UnknownLayer(l.clone()));
            }
            if !convs.contains(&l.as_str()) {
                return Err(Error::Config(format!("layer '{l}' has no spatial activations")));
            }
        }
        let [c, h, w] = model.input_shape();
        for spec in &self.scenarios {
            let [ph, pw] = spec.config.patch_size;
            if ph > h || pw > w {
                return Err(Error::Config(format!(
                    "{}: patch {ph}x{pw} exceeds the {c}x{h}x{w} input",
                    spec.kind.as_str()
                )));
            }
            let needed = if spec.kind.needs_second_class() { 2 } else { 1 };
            if model.classes() < needed {
                return Err(Error::Config("model has too few classes".into()));
            }
        }
        Ok(())
    }

    /// Methods with layer-selectable entries expanded over `layers`.
    pub fn expanded_methods(&self, model: &Model) -> Result<Vec<(MethodConfig, Option<String>)>> {
        let convs = model.conv_layers();
        let last = convs.last().map(|s| s.to_string());
        let mut out = Vec::new();
        for m in &self.methods {
            match m {
                MethodConfig::Gradcam { layer } if self.layers.is_empty() => {
                    let l = layer.clone().or_else(|| last.clone());
                    out.push((m.clone(), l));
                }
                m if m.has_layer() => {
                    for l in &self.layers {
                        out.push((m.with_layer(l)?, Some(l.clone())));
                    }
                }
                m => out.push((m.clone(), None)),
            }
        }
        Ok(out)
    }
}
