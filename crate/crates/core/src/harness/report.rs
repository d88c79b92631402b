use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::JobRecord;
use crate::attribution::MethodConfig;
use crate::error::{Error, Result};
use crate::metrics::{concentration, pearson, MetricKind, MetricSample, Undefined};
use crate::scenario::ScenarioKind;

/// A saturation map counts as concentrated when its larger patch holds at
/// least this share of the two patches' mass.
pub const CONCENTRATION_THRESHOLD: f64 = 0.9;

/// One row of the report table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub layer: Option<String>,
    /// `null_feature`, `class_double`, `class_single`, `saturation` or
    /// `concentration`.
    pub metric: String,
    /// `mean`, `pearson` or `frequency`.
    pub statistic: String,
    pub value: Option<f64>,
    pub samples: usize,
    /// Jobs of the matching kind that contributed nothing: failed, not
    /// converged, or undefined metric.
    pub excluded: usize,
    pub undefined: Option<Undefined>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Aggregates per `(method, layer)` in configuration order. Only samples
/// from converged instances with a defined value count.
pub fn aggregate(
    samples: &[MetricSample],
    jobs: &[JobRecord],
    methods: &[(MethodConfig, Option<String>)],
) -> Vec<Aggregate> {
    let jobs_of = |kind: ScenarioKind| jobs.iter().filter(|j| j.kind == kind).count();
    let mut out = Vec::new();
    for (m, layer) in methods {
        let mine: Vec<&MetricSample> = samples
            .iter()
            .filter(|s| s.method == m.id() && s.layer == *layer && s.usable())
            .collect();
        let values = |kind: MetricKind| -> BTreeMap<&str, &MetricSample> {
            mine.iter()
                .filter(|s| s.metric == kind)
                .map(|s| (s.scenario_id.as_str(), *s))
                .collect()
        };
        let row = |metric: &str, statistic: &str, value: std::result::Result<f64, Undefined>, n, total: usize| Aggregate {
            method: m.id().to_string(),
            layer: layer.clone(),
            metric: metric.into(),
            statistic: statistic.into(),
            value: value.ok(),
            samples: n,
            excluded: total - n,
            undefined: value.err(),
        };
        for (kind, metric, name) in [
            (ScenarioKind::Null, MetricKind::NullFeature, "null_feature"),
            (ScenarioKind::ClassDouble, MetricKind::ClassDouble, "class_double"),
        ] {
            let total = jobs_of(kind);
            if total == 0 {
                continue;
            }
            let v: Vec<f64> = values(metric).values().filter_map(|s| s.value).collect();
            out.push(row(name, "mean", mean(&v).ok_or(Undefined::TooFewSamples), v.len(), total));
        }
        let total = jobs_of(ScenarioKind::ClassSingle);
        if total > 0 {
            let (a, b) = (values(MetricKind::InOutA), values(MetricKind::InOutB));
            let pairs: Vec<(f64, f64)> = a
                .iter()
                .filter_map(|(id, sa)| Some((sa.value?, b.get(id)?.value?)))
                .collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            out.push(row("class_single", "pearson", pearson(&xs, &ys), pairs.len(), total));
        }
        let total = jobs_of(ScenarioKind::Saturation);
        if total > 0 {
            let (p1, p2) = (values(MetricKind::PatchMass1), values(MetricKind::PatchMass2));
            let pairs: Vec<(f64, f64)> = p1
                .iter()
                .filter_map(|(id, s1)| Some((s1.numerator, p2.get(id)?.numerator)))
                .collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            out.push(row("saturation", "pearson", pearson(&xs, &ys), pairs.len(), total));
            let shares: Vec<f64> = pairs
                .iter()
                .filter_map(|&(x, y)| concentration(x, y).ok())
                .map(|r| if r.value >= CONCENTRATION_THRESHOLD { 1.0 } else { 0.0 })
                .collect();
            out.push(row(
                "concentration",
                "frequency",
                mean(&shares).ok_or(Undefined::ZeroMass),
                shares.len(),
                total,
            ));
        }
    }
    out
}

pub fn write_samples_csv(samples: &[MetricSample]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in samples {
        w.serialize(s)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<MetricSample>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<MetricSample>, _>>()?)
}
