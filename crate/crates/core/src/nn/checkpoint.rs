//! Model checkpoints in the archive container: JSON manifest (spec, training
//! config, epoch) plus the parameters as little-endian `f32`, ordered
//! `W_0, b_0, W_1, b_1, ...` with weights row-major.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::spec::{param_count, MlpSpec};
use super::train::TrainConfig;
use crate::data_io::{archive_paths, decode_f32_le, encode_f32_le};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "quivernet-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub spec: MlpSpec,
    pub param_count: usize,
    pub epoch: usize,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl CheckpointManifest {
    pub fn new(spec: &MlpSpec, epoch: usize, train_config: Option<TrainConfig>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            spec: spec.clone(),
            param_count: param_count(spec),
            epoch,
            train_config,
            meta: serde_json::Value::Null,
        }
    }
}

pub fn save_checkpoint(mlp: &Mlp<f32>, manifest: &CheckpointManifest) -> Result<(String, Vec<u8>)> {
    if &manifest.spec != mlp.spec() {
        return Err(Error::ManifestMismatch("manifest spec differs from the model".into()));
    }
    let values = mlp
        .weights()
        .iter()
        .zip(mlp.biases())
        .flat_map(|(w, b)| w.iter().chain(b.iter()).copied());
    Ok((serde_json::to_string_pretty(manifest)?, encode_f32_le(values)))
}

pub fn load_checkpoint(manifest_text: &str, payload: &[u8]) -> Result<(Mlp<f32>, CheckpointManifest)> {
    let manifest: CheckpointManifest = serde_json::from_str(manifest_text)?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::ManifestMismatch(format!("unknown format '{}'", manifest.format)));
    }
    let expected = param_count(&manifest.spec);
    if manifest.param_count != expected {
        return Err(Error::ManifestMismatch(format!(
            "manifest claims {} parameters, spec has {expected}",
            manifest.param_count
        )));
    }
    let values = decode_f32_le(payload)?;
    if values.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "payload holds {} parameters, spec needs {expected}",
            values.len()
        )));
    }
    let sizes = manifest.spec.layer_sizes();
    let mut rest = values.as_slice();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in sizes.windows(2) {
        let (inp, out) = (w[0], w[1]);
        let (wv, tail) = rest.split_at(inp * out);
        let (bv, tail) = tail.split_at(out);
        weights.push(Array2::from_shape_vec((out, inp), wv.to_vec()).expect("sized above"));
        biases.push(Array1::from(bv.to_vec()));
        rest = tail;
    }
    let mlp = Mlp::from_parts(manifest.spec.clone(), weights, biases)?;
    Ok((mlp, manifest))
}

pub fn write_checkpoint(dir: &Path, name: &str, mlp: &Mlp<f32>, manifest: &CheckpointManifest) -> Result<()> {
    let (text, payload) = save_checkpoint(mlp, manifest)?;
    let (mpath, ppath) = archive_paths(dir, name);
    fs::create_dir_all(dir)?;
    fs::write(ppath, payload)?;
    fs::write(mpath, text)?;
    Ok(())
}

pub fn read_checkpoint(dir: &Path, name: &str) -> Result<(Mlp<f32>, CheckpointManifest)> {
    let (mpath, ppath) = archive_paths(dir, name);
    load_checkpoint(&fs::read_to_string(mpath)?, &fs::read(ppath)?)
}
