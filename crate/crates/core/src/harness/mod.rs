//! Batch runs: scenario generation, attribution, metrics and reports.
//!
//! A run directory holds `report.json`, `samples.csv`, `timing.json`,
//! `model.axbm`, `scenarios/<id>/` and `heatmaps/<id>/`. Everything except
//! `timing.json` is a deterministic function of the configuration.

mod config;
mod render;
mod report;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::{attribute, AttributionMap, Context, MethodConfig};
use crate::error::{Error, Result};
use crate::metrics::{
    class_sensitivity_double, in_out_ratio, null_feature_metric, MetricKind, MetricSample, Preprocess, Ratio,
};
use crate::micronet::{Model, TrainReport};
use crate::region::Region;
use crate::scenario::{generate, save_instance, sha256_hex, write_atomic, ScenarioInstance, ScenarioKind};

pub use config::{ModelSource, RunConfig, ScenarioSpec};
pub use render::{render_heatmaps, render_scenario, HeatmapEntry, HeatmapIndex};
pub use report::{aggregate, read_samples_csv, write_samples_csv, Aggregate, CONCENTRATION_THRESHOLD};

/// Per-job stream seed: the first 8 bytes of
/// `SHA-256(master ‖ family ‖ kind ‖ index)`, so adding jobs to one family
/// never changes the seeds of another.
pub fn job_seed(master: u64, family: usize, kind: ScenarioKind, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((family as u64).to_le_bytes());
    h.update(kind.as_str().as_bytes());
    h.update((index as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub family: usize,
    pub index: usize,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub target_a: usize,
    pub target_b: Option<usize>,
    pub scenario_id: Option<String>,
    pub converged: bool,
    pub steps: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub sha256: String,
    pub layers: Vec<String>,
    pub classes: usize,
    pub training: Option<TrainReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: RunConfig,
    pub config_sha256: String,
    pub model: ModelSummary,
    pub jobs: Vec<JobRecord>,
    pub failed_jobs: usize,
    pub aggregates: Vec<Aggregate>,
    pub samples_csv: String,
}

impl EvaluationReport {
    /// More than half of the jobs failed.
    pub fn majority_failed(&self) -> bool {
        2 * self.failed_jobs > self.jobs.len()
    }

    pub fn find(&self, method: &str, layer: Option<&str>, metric: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.layer.as_deref() == layer && a.metric == metric)
    }
}

/// Everything a run produced, before or after it was written to disk.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub report: EvaluationReport,
    pub samples: Vec<MetricSample>,
    /// Generated instances by job, `None` for failed jobs.
    pub instances: Vec<Option<ScenarioInstance>>,
    pub seconds: f64,
}

struct JobOutcome {
    record: JobRecord,
    instance: Option<ScenarioInstance>,
    samples: Vec<MetricSample>,
    maps: Vec<(Option<String>, AttributionMap)>,
}

/// Maps per target for the instance's composed input.
fn explain(
    model: &Model,
    instance: &ScenarioInstance,
    methods: &[(MethodConfig, Option<String>)],
    targets: &[usize],
) -> Result<Vec<(Option<String>, AttributionMap)>> {
    let input = instance.compose(instance.full_coalition())?;
    let players: Vec<Region> = instance.patches.iter().map(|p| p.region).collect();
    let ctx = Context {
        reference: &instance.reference,
        players: &players,
    };
    let mut maps = Vec::new();
    for (m, layer) in methods {
        for &t in targets {
            maps.push((layer.clone(), attribute(model, &input, t, m, &ctx)?));
        }
    }
    Ok(maps)
}

fn region(inst: &ScenarioInstance, name: &str) -> Region {
    inst.patch(name).expect("slot of this kind").region
}

/// Metric rows for one method's maps (one per target, in target order).
fn score(inst: &ScenarioInstance, maps: &[&AttributionMap], layer: Option<&str>, pre: Preprocess) -> Vec<MetricSample> {
    let s: Vec<_> = maps.iter().map(|m| pre.apply(&m.scores)).collect();
    let row = |metric, r| MetricSample::new(&inst.id, &maps[0].method, layer, metric, r, inst.converged);
    match inst.kind {
        ScenarioKind::Null => vec![row(MetricKind::NullFeature, null_feature_metric(&s[0], &region(inst, "f_null")))],
        ScenarioKind::ClassDouble => {
            let (fa, fb) = (region(inst, "f_a"), region(inst, "f_b"));
            vec![row(MetricKind::ClassDouble, class_sensitivity_double(&s[0], &s[1], &fa, &fb))]
        }
        ScenarioKind::ClassSingle => {
            let fa = region(inst, "f_a");
            vec![
                row(MetricKind::InOutA, in_out_ratio(&s[0], &fa)),
                row(MetricKind::InOutB, in_out_ratio(&s[1], &fa)),
            ]
        }
        ScenarioKind::Saturation => {
            let total = s[0].sum();
            let mass = |name| region(inst, name).pixels(s[0].shape()[1]).map(|i| s[0].data()[i]).sum::<f64>();
            vec![
                row(MetricKind::PatchMass1, Ratio::new(mass("f_a1"), total)),
                row(MetricKind::PatchMass2, Ratio::new(mass("f_a2"), total)),
            ]
        }
    }
}

fn targets(inst: &ScenarioInstance) -> Vec<usize> {
    match inst.kind {
        ScenarioKind::ClassSingle | ScenarioKind::ClassDouble => {
            vec![inst.target_a, inst.target_b.expect("two-class kind")]
        }
        _ => vec![inst.target_a],
    }
}

/// Runs `methods` on a converged instance and scores them.
pub fn evaluate_instance(
    model: &Model,
    instance: &ScenarioInstance,
    methods: &[(MethodConfig, Option<String>)],
    pre: Preprocess,
) -> Result<(Vec<MetricSample>, Vec<(Option<String>, AttributionMap)>)> {
    let ts = targets(instance);
    let maps = explain(model, instance, methods, &ts)?;
    let samples = maps
        .chunks(ts.len())
        .flat_map(|group| {
            let refs: Vec<&AttributionMap> = group.iter().map(|(_, m)| m).collect();
            score(instance, &refs, group[0].0.as_deref(), pre)
        })
        .collect();
    Ok((samples, maps))
}

fn execute(
    model: &Model,
    config: &RunConfig,
    methods: &[(MethodConfig, Option<String>)],
    family: usize,
    index: usize,
) -> JobOutcome {
    let spec = &config.scenarios[family];
    let seed = job_seed(config.seed, family, spec.kind, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = model.classes();
    let a = rng.random_range(0..k);
    let b = (a + 1 + rng.random_range(0..k - 1)) % k;
    let scenario_seed: u64 = rng.random();
    let mut record = JobRecord {
        family,
        index,
        kind: spec.kind,
        seed,
        target_a: a,
        target_b: spec.kind.needs_second_class().then_some(b),
        scenario_id: None,
        converged: false,
        steps: 0,
        error: None,
    };
    let work = catch_unwind(AssertUnwindSafe(|| -> Result<_> {
        let instance = generate(model, spec.kind, a, b, &spec.config, scenario_seed)?;
        let (samples, maps) = if instance.converged {
            evaluate_instance(model, &instance, methods, config.preprocess)?
        } else {
            (Vec::new(), Vec::new())
        };
        Ok((instance, samples, maps))
    }));
    match work {
        Ok(Ok((instance, samples, maps))) => {
            record.scenario_id = Some(instance.id.clone());
            record.converged = instance.converged;
            record.steps = instance.steps;
            JobOutcome {
                record,
                instance: Some(instance),
                samples,
                maps,
            }
        }
        Ok(Err(e)) => {
            record.error = Some(e.to_string());
            JobOutcome {
                record,
                instance: None,
                samples: Vec::new(),
                maps: Vec::new(),
            }
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "job panicked".into());
            record.error = Some(format!("panic: {msg}"));
            JobOutcome {
                record,
                instance: None,
                samples: Vec::new(),
                maps: Vec::new(),
            }
        }
    }
}

fn model_summary(model: &Model, training: Option<TrainReport>) -> ModelSummary {
    ModelSummary {
        sha256: sha256_hex(&model.to_bytes()),
        layers: model.layer_names().iter().map(|s| s.to_string()).collect(),
        classes: model.classes(),
        training,
    }
}

/// Runs the configured battery against `model`, writing outputs under `out`
/// when given. `threads` sizes the worker pool (rayon's default when `None`).
pub fn run_with_model(
    config: &RunConfig,
    model: &Model,
    training: Option<TrainReport>,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<RunResult> {
    let start = Instant::now();
    config.validate()?;
    config.validate_for(model)?;
    let methods = config.expanded_methods(model)?;
    let jobs: Vec<(usize, usize)> = config
        .scenarios
        .iter()
        .enumerate()
        .flat_map(|(f, s)| (0..s.count).map(move |i| (f, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("model.axbm"), &model.to_bytes())?;
    }
    let outcomes: Vec<JobOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(f, i)| execute(model, config, &methods, f, i))
            .collect()
    });

    if let Some(dir) = out {
        for o in &outcomes {
            let Some(inst) = &o.instance else { continue };
            if config.save_scenarios {
                save_instance(inst, &dir.join("scenarios").join(&inst.id))?;
            }
            if o.record.index < config.heatmaps && !o.maps.is_empty() {
                let labelled: Vec<(Option<&str>, &AttributionMap)> =
                    o.maps.iter().map(|(l, m)| (l.as_deref(), m)).collect();
                render_heatmaps(inst, &labelled, &dir.join("heatmaps").join(&inst.id))?;
            }
        }
    }

    let records: Vec<JobRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let samples: Vec<MetricSample> = outcomes.iter().flat_map(|o| o.samples.iter().cloned()).collect();
    let aggregates = aggregate(&samples, &records, &methods);
    let config_bytes = serde_json::to_vec(config)?;
    let report = EvaluationReport {
        config: config.clone(),
        config_sha256: sha256_hex(&config_bytes),
        model: model_summary(model, training),
        failed_jobs: records.iter().filter(|r| r.error.is_some()).count(),
        jobs: records,
        aggregates,
        samples_csv: "samples.csv".into(),
    };
    let seconds = start.elapsed().as_secs_f64();
    if let Some(dir) = out {
        write_atomic(&dir.join("samples.csv"), &write_samples_csv(&samples)?)?;
        write_atomic(&dir.join("report.json"), &serde_json::to_vec_pretty(&report)?)?;
        let timing = serde_json::json!({
            "wall_clock_seconds": seconds,
            "threads": pool.current_num_threads(),
        });
        write_atomic(&dir.join("timing.json"), &serde_json::to_vec_pretty(&timing)?)?;
    }
    Ok(RunResult {
        report,
        samples,
        instances: outcomes.into_iter().map(|o| o.instance).collect(),
        seconds,
    })
}

/// Materializes the model and runs the battery into `out`.
pub fn run(config: &RunConfig, out: &Path, threads: Option<usize>) -> Result<RunResult> {
    config.validate()?;
    let (model, training) = config.model.materialize()?;
    run_with_model(config, &model, training, Some(out), threads)
}

/// The battery repeated for each of `layers` with `method` as the only method.
pub fn layer_sweep(config: &RunConfig, method: &MethodConfig, layers: &[String]) -> Result<RunConfig> {
    if !method.has_layer() {
        return Err(Error::Config(format!("{} does not take a layer", method.id())));
    }
    if layers.is_empty() {
        return Err(Error::Config("layer sweep needs at least one layer".into()));
    }
    let swept = RunConfig {
        methods: vec![method.clone()],
        layers: layers.to_vec(),
        ..config.clone()
    };
    swept.validate()?;
    Ok(swept)
}
