use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{explain, targets};
use crate::attribution::{to_pgm, AttributionMap, MethodConfig};
use crate::container;
use crate::error::{Error, Result};
use crate::micronet::Model;
use crate::region::Region;
use crate::scenario::{write_atomic, ScenarioInstance, PIXEL_RANGE};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapEntry {
    pub file: String,
    pub method: String,
    pub layer: Option<String>,
    pub target: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapIndex {
    pub scenario_id: String,
    pub input: String,
    /// Raw `f64` maps in the container format, one entry per heatmap file.
    pub raw: String,
    pub patches: Vec<(String, Region)>,
    pub maps: Vec<HeatmapEntry>,
}

/// Channel-mean input mapped from the pixel range onto `0..=255`.
fn input_pgm(input: &Tensor) -> Result<Vec<u8>> {
    let s = input.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let (lo, hi) = PIXEL_RANGE;
    let mut mean = input.sum_channels()?.map(|v| v / c as f64);
    mean.data_mut().iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(mean.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(bytes)
}

/// Writes `input.pgm`, one normalized graymap per map, `maps.axbm` with the
/// raw scores and an `index.json` listing patch boxes.
pub fn render_heatmaps(
    instance: &ScenarioInstance,
    maps: &[(Option<&str>, &AttributionMap)],
    dir: &Path,
) -> Result<HeatmapIndex> {
    if let Some((_, first)) = maps.first() {
        if maps.iter().any(|(_, m)| m.scores.shape() != first.scores.shape()) {
            return Err(Error::Precondition("heatmaps must share one spatial shape".into()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let input = instance.compose(instance.full_coalition())?;
    write_atomic(&dir.join("input.pgm"), &input_pgm(&input)?)?;
    let mut entries = Vec::new();
    let mut raw = Vec::new();
    for (layer, m) in maps {
        let stem = match layer {
            Some(l) => format!("{}-{l}-t{}", m.method, m.target),
            None => format!("{}-t{}", m.method, m.target),
        };
        let file = format!("{stem}.pgm");
        write_atomic(&dir.join(&file), &to_pgm(&m.scores)?)?;
        raw.push((stem, &m.scores));
        entries.push(HeatmapEntry {
            file,
            method: m.method.clone(),
            layer: layer.map(str::to_string),
            target: m.target,
        });
    }
    write_atomic(
        &dir.join("maps.axbm"),
        &container::encode(raw.iter().map(|(n, t)| (n.as_str(), *t))),
    )?;
    let index = HeatmapIndex {
        scenario_id: instance.id.clone(),
        input: "input.pgm".into(),
        raw: "maps.axbm".into(),
        patches: instance.patches.iter().map(|p| (p.name.clone(), p.region)).collect(),
        maps: entries,
    };
    write_atomic(&dir.join("index.json"), &serde_json::to_vec_pretty(&index)?)?;
    Ok(index)
}

/// Explains a stored instance with `methods` and renders the result.
pub fn render_scenario(
    model: &Model,
    instance: &ScenarioInstance,
    methods: &[(MethodConfig, Option<String>)],
    dir: &Path,
) -> Result<HeatmapIndex> {
    let maps = explain(model, instance, methods, &targets(instance))?;
    let labelled: Vec<(Option<&str>, &AttributionMap)> = maps.iter().map(|(l, m)| (l.as_deref(), m)).collect();
    render_heatmaps(instance, &labelled, dir)
}
