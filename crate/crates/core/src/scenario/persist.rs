use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::generate::{bookkeeping, records};
use super::{
    OptimizerTrace, Parameterization, PatchSpec, ResidualRecord, ScenarioInstance, ScenarioKind, ScenarioSeeds,
    StrengthRecord,
};
use crate::container;
use crate::error::{Error, Result};
use crate::micronet::Model;
use crate::region::Region;
use crate::tensor::Tensor;

pub const MANIFEST_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobRef {
    /// Hex SHA-256 of the blob file; the file lives at `blobs/<sha256>.axbm`.
    pub sha256: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchEntry {
    pub name: String,
    pub region: Region,
    pub parameterization: Parameterization,
    pub pixels: BlobRef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub id: String,
    pub kind: ScenarioKind,
    pub target_a: usize,
    pub target_b: Option<usize>,
    pub confidence: Option<f64>,
    pub epsilon_null: f64,
    pub delta: f64,
    pub converged: bool,
    pub steps: usize,
    pub reference: BlobRef,
    pub patches: Vec<PatchEntry>,
    pub residuals: BTreeMap<String, ResidualRecord>,
    pub strengths: BTreeMap<String, StrengthRecord>,
    pub seeds: ScenarioSeeds,
    pub trace: OptimizerTrace,
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn put_blob(dir: &Path, name: &str, t: &Tensor) -> Result<BlobRef> {
    let bytes = container::encode([(name, t)]);
    let sha = sha256_hex(&bytes);
    let path = dir.join("blobs").join(format!("{sha}.axbm"));
    if !path.exists() {
        write_atomic(&path, &bytes)?;
    }
    Ok(BlobRef {
        sha256: sha,
        shape: t.shape().to_vec(),
    })
}

fn get_blob(dir: &Path, blob: &BlobRef) -> Result<Tensor> {
    let path = dir.join("blobs").join(format!("{}.axbm", blob.sha256));
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if sha256_hex(&bytes) != blob.sha256 {
        return Err(Error::Format(format!("{} does not match its content hash", path.display())));
    }
    let mut entries = container::decode(&bytes)?;
    if entries.len() != 1 || entries[0].1.shape() != blob.shape {
        return Err(Error::Format(format!("{} holds an unexpected tensor", path.display())));
    }
    Ok(entries.remove(0).1)
}

/// Writes `manifest.json` and the reference and patch blobs under `dir`.
pub fn save_instance(instance: &ScenarioInstance, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir.join("blobs")).map_err(|e| Error::io(dir, e))?;
    let reference = put_blob(dir, "reference", &instance.reference)?;
    let patches = instance
        .patches
        .iter()
        .map(|p| {
            Ok(PatchEntry {
                name: p.name.clone(),
                region: p.region,
                parameterization: p.parameterization,
                pixels: put_blob(dir, &p.name, &p.pixels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        id: instance.id.clone(),
        kind: instance.kind,
        target_a: instance.target_a,
        target_b: instance.target_b,
        confidence: instance.confidence,
        epsilon_null: instance.epsilon_null,
        delta: instance.delta,
        converged: instance.converged,
        steps: instance.steps,
        reference,
        patches,
        residuals: instance.residuals.clone(),
        strengths: instance.strengths.clone(),
        seeds: instance.seeds.clone(),
        trace: instance.trace.clone(),
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    write_atomic(&dir.join(MANIFEST), &json)?;
    Ok(manifest)
}

/// Reads an instance from `path`, a scenario directory or its manifest file.
pub fn load_instance(path: &Path) -> Result<ScenarioInstance> {
    let (dir, file) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST))
    } else {
        (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
    };
    let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
    let m: Manifest = serde_json::from_slice(&bytes)?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Format(format!(
            "manifest version {} (expected {MANIFEST_VERSION})",
            m.version
        )));
    }
    let reference = get_blob(&dir, &m.reference)?;
    let patches = m
        .patches
        .iter()
        .map(|p| PatchSpec::new(&p.name, p.region, p.parameterization, get_blob(&dir, &p.pixels)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioInstance {
        id: m.id,
        kind: m.kind,
        target_a: m.target_a,
        target_b: m.target_b,
        confidence: m.confidence,
        reference,
        patches,
        residuals: m.residuals,
        strengths: m.strengths,
        epsilon_null: m.epsilon_null,
        delta: m.delta,
        converged: m.converged,
        steps: m.steps,
        trace: m.trace,
        seeds: m.seeds,
    })
}

/// Recomputes every residual and strength from scratch and returns the
/// largest absolute deviation from the stored values.
///
/// Fails if any deviation exceeds `1e-9` or the record sets differ.
pub fn verify_residuals(model: &Model, instance: &ScenarioInstance) -> Result<f64> {
    let (res, str_) = bookkeeping(instance.kind, instance.target_a, instance.target_b.unwrap_or(instance.target_a));
    let (fresh_r, fresh_s) = records(model, instance, &res, &str_)?;
    if fresh_r.keys().ne(instance.residuals.keys()) || fresh_s.keys().ne(instance.strengths.keys()) {
        return Err(Error::Format(format!("{}: residual names do not match the scenario kind", instance.id)));
    }
    let mut worst = 0.0f64;
    for (k, r) in &fresh_r {
        let stored = &instance.residuals[k];
        if stored.term != r.term {
            return Err(Error::Format(format!("{}: residual {k} has a different definition", instance.id)));
        }
        worst = worst.max((stored.value - r.value).abs());
    }
    for (k, s) in &fresh_s {
        worst = worst.max((instance.strengths[k].value - s.value).abs());
    }
    if worst > 1e-9 {
        return Err(Error::Format(format!(
            "{}: recomputed residuals deviate by {worst:e}",
            instance.id
        )));
    }
    Ok(worst)
}
