use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AttackConfig, AttackParams};
use super::methods::{build_attack, Attack};
use crate::data_io::{read_archive, write_archive, ArchiveManifest, Dataset};
use crate::error::{Error, Result};
use crate::nn::Mlp;

/// Rows attacked together; only affects speed, never results.
pub const ATTACK_BATCH: usize = 256;

/// Adversarial inputs for a set of source samples with flip bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialSet {
    pub params: AttackParams,
    /// Seed the per-sample streams were split from.
    pub seed: u64,
    /// Source sample index in the attacked dataset.
    pub indices: Vec<usize>,
    /// One adversarial input per row, in `[0, 1]`.
    pub inputs: Array2<f32>,
    pub original_pred: Vec<usize>,
    pub adversarial_pred: Vec<usize>,
    pub flipped: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    params: AttackParams,
    seed: u64,
    indices: Vec<usize>,
    original_pred: Vec<usize>,
    adversarial_pred: Vec<usize>,
    flipped: Vec<bool>,
}

impl AdversarialSet {
    pub fn name(&self) -> &'static str {
        self.params.display_name()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The report's "Total": samples whose prediction the attack changed.
    pub fn flip_count(&self) -> usize {
        self.flipped.iter().filter(|&&f| f).count()
    }

    /// Row positions of flipped samples.
    pub fn flipped_rows(&self) -> Vec<usize> {
        self.flipped.iter().enumerate().filter(|(_, &f)| f).map(|(r, _)| r).collect()
    }

    fn sidecar_path(dir: &Path, name: &str) -> PathBuf {
        dir.join(format!("{name}.adv.json"))
    }

    /// Writes the inputs as a matrix archive of `1 x d` matrices plus a JSON
    /// sidecar holding the bookkeeping fields.
    pub fn write(&self, dir: &Path, name: &str, run_id: &str) -> Result<()> {
        let d = self.inputs.ncols();
        let mut manifest = ArchiveManifest::new([1, d], self.len(), run_id);
        manifest.class_labels = self.original_pred.iter().map(|&c| Some(c)).collect();
        manifest.predicted_labels = self.adversarial_pred.iter().map(|&c| Some(c)).collect();
        manifest.meta = serde_json::json!({ "kind": "adversarial-inputs", "attack": self.name() });
        let rows: Vec<Array2<f32>> = self.inputs.rows().into_iter().map(|r| r.to_owned().insert_axis(Axis(0))).collect();
        write_archive(dir, name, &rows, &manifest)?;
        let sidecar = Sidecar {
            params: self.params.clone(),
            seed: self.seed,
            indices: self.indices.clone(),
            original_pred: self.original_pred.clone(),
            adversarial_pred: self.adversarial_pred.clone(),
            flipped: self.flipped.clone(),
        };
        fs::write(Self::sidecar_path(dir, name), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn read(dir: &Path, name: &str) -> Result<Self> {
        let archive = read_archive(dir, name)?;
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(Self::sidecar_path(dir, name))?)?;
        let n = archive.manifest.count;
        if [sidecar.indices.len(), sidecar.original_pred.len(), sidecar.adversarial_pred.len(), sidecar.flipped.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::ManifestMismatch(format!("sidecar of '{name}' does not match {n} archived inputs")));
        }
        let d = archive.manifest.shape[1];
        let views: Vec<ArrayView2<f32>> = archive.matrices.iter().map(|m| m.view()).collect();
        let inputs = if views.is_empty() {
            Array2::zeros((0, d))
        } else {
            concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?
        };
        Ok(Self {
            params: sidecar.params,
            seed: sidecar.seed,
            indices: sidecar.indices,
            inputs,
            original_pred: sidecar.original_pred,
            adversarial_pred: sidecar.adversarial_pred,
            flipped: sidecar.flipped,
        })
    }
}

/// Random stream of source sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Attacks the samples `indices` of `dataset`, moving away from labels `y`
/// (one per index).
pub fn run_attack(
    attack: &dyn Attack,
    mlp: &Mlp<f32>,
    dataset: &Dataset,
    indices: &[usize],
    y: &[usize],
    seed: u64,
) -> Result<AdversarialSet> {
    if indices.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} indices, {} labels", indices.len(), y.len())));
    }
    if mlp.input_dim() != dataset.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "network input {} vs dataset {}",
            mlp.input_dim(),
            dataset.input_dim()
        )));
    }
    let chunks: Vec<(Array2<f32>, Vec<usize>)> = indices
        .par_chunks(ATTACK_BATCH)
        .zip(y.par_chunks(ATTACK_BATCH))
        .map(|(idx, yb)| {
            let x = dataset.gather(idx);
            let mut rngs: Vec<ChaCha8Rng> = idx.iter().map(|&i| sample_rng(seed, i)).collect();
            let adv = attack.perturb(mlp, x.view(), yb, &mut rngs);
            let pred = mlp.predict_batch(adv.view());
            (adv, pred)
        })
        .collect();
    let d = dataset.input_dim();
    let views: Vec<ArrayView2<f32>> = chunks.iter().map(|(a, _)| a.view()).collect();
    let inputs = if views.is_empty() {
        Array2::zeros((0, d))
    } else {
        concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?
    };
    let adversarial_pred: Vec<usize> = chunks.into_iter().flat_map(|(_, p)| p).collect();
    let flipped = adversarial_pred.iter().zip(y).map(|(a, o)| a != o).collect();
    Ok(AdversarialSet {
        params: attack.params().clone(),
        seed,
        indices: indices.to_vec(),
        inputs,
        original_pred: y.to_vec(),
        adversarial_pred,
        flipped,
    })
}

/// Runs every configured attack on the test samples the model classifies
/// correctly. Results follow the order of `configs`.
pub fn run_attack_suite(mlp: &Mlp<f32>, dataset: &Dataset, configs: &[AttackConfig], seed: u64) -> Result<Vec<AdversarialSet>> {
    let attacks = configs.iter().map(build_attack).collect::<Result<Vec<_>>>()?;
    if attacks.is_empty() {
        return Ok(Vec::new());
    }
    let preds = mlp.predict_batch(dataset.images().view());
    let correct: Vec<usize> = (0..dataset.len()).filter(|&i| preds[i] == dataset.label(i)).collect();
    let y: Vec<usize> = correct.iter().map(|&i| preds[i]).collect();
    attacks
        .iter()
        .map(|a| run_attack(a.as_ref(), mlp, dataset, &correct, &y, a.params().seed.unwrap_or(seed)))
        .collect()
}
