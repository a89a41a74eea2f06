use std::path::Path;

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::data_io::{read_archive, write_archive, ArchiveManifest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsOptions {
    /// Keep the squared deviations without the square root.
    #[serde(default)]
    pub variance_as_written: bool,
}

/// Per-class mean matrix `M^j` and deviation matrix `S^j` over correctly
/// classified training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub means: Vec<Array2<f64>>,
    pub devs: Vec<Array2<f64>>,
    pub counts: Vec<usize>,
    pub options: StatsOptions,
}

/// Entrywise mean and sample deviation of one class, two passes in sample order.
pub fn class_moments(samples: &[ArrayView2<f64>], class: usize, options: StatsOptions) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { class, count: n });
    }
    let dim = samples[0].dim();
    if let Some(bad) = samples.iter().find(|m| m.dim() != dim) {
        return Err(Error::ShapeMismatch(format!("class {class}: {:?} vs {dim:?}", bad.dim())));
    }
    let mut mean = Array2::<f64>::zeros(dim);
    for m in samples {
        mean += m;
    }
    mean /= n as f64;
    let mut dev = Array2::<f64>::zeros(dim);
    for m in samples {
        Zip::from(&mut dev).and(m).and(&mean).for_each(|s, &x, &mu| {
            let d = x - mu;
            *s += d * d;
        });
    }
    dev /= (n - 1) as f64;
    if !options.variance_as_written {
        dev.mapv_inplace(f64::sqrt);
    }
    Ok((mean, dev))
}

/// Statistics of every class from matrices grouped by class (`groups[j]`).
pub fn class_stats(groups: &[Vec<Array2<f64>>], options: StatsOptions) -> Result<ClassStats> {
    let mut stats = ClassStats::empty(options);
    for (j, g) in groups.iter().enumerate() {
        let views: Vec<ArrayView2<f64>> = g.iter().map(|m| m.view()).collect();
        let (mean, dev) = class_moments(&views, j, options)?;
        stats.push(mean, dev, g.len())?;
    }
    Ok(stats)
}

impl ClassStats {
    pub fn empty(options: StatsOptions) -> Self {
        Self {
            means: Vec::new(),
            devs: Vec::new(),
            counts: Vec::new(),
            options,
        }
    }

    /// Appends the next class.
    pub fn push(&mut self, mean: Array2<f64>, dev: Array2<f64>, count: usize) -> Result<()> {
        if mean.dim() != dev.dim() || self.means.first().is_some_and(|m| m.dim() != mean.dim()) {
            return Err(Error::ShapeMismatch(format!("class {} has shape {:?}", self.means.len(), mean.dim())));
        }
        self.means.push(mean);
        self.devs.push(dev);
        self.counts.push(count);
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.means.first().map_or((0, 0), |m| m.dim())
    }

    pub fn mean(&self, class: usize) -> Result<&Array2<f64>> {
        self.means.get(class).ok_or(Error::UndefinedRegion)
    }

    pub fn dev(&self, class: usize) -> Result<&Array2<f64>> {
        self.devs.get(class).ok_or(Error::UndefinedRegion)
    }

    /// Rounds every entry to `f32`, the precision of the on-disk format.
    pub fn quantized(&self) -> Self {
        let q = |m: &Array2<f64>| m.mapv(|v| v as f32 as f64);
        Self {
            means: self.means.iter().map(q).collect(),
            devs: self.devs.iter().map(q).collect(),
            counts: self.counts.clone(),
            options: self.options,
        }
    }

    /// Stored as `2k` matrices: the means of classes `0..k`, then the deviations.
    pub fn write(&self, dir: &Path, name: &str, run_id: &str) -> Result<()> {
        let (r, c) = self.shape();
        let k = self.classes();
        let mut manifest = ArchiveManifest::new([r, c], 2 * k, run_id);
        manifest.class_labels = (0..k).chain(0..k).map(Some).collect();
        manifest.meta = serde_json::json!({
            "kind": "class-stats",
            "counts": self.counts,
            "options": self.options,
        });
        let mats: Vec<Array2<f32>> = self
            .means
            .iter()
            .chain(&self.devs)
            .map(|m| m.mapv(|v| v as f32))
            .collect();
        write_archive(dir, name, &mats, &manifest)
    }

    pub fn read(dir: &Path, name: &str) -> Result<Self> {
        let archive = read_archive(dir, name)?;
        let meta = &archive.manifest.meta;
        if meta.get("kind").and_then(|v| v.as_str()) != Some("class-stats") {
            return Err(Error::ManifestMismatch(format!("'{name}' is not a class-stats archive")));
        }
        let counts: Vec<usize> = serde_json::from_value(meta["counts"].clone())?;
        let options: StatsOptions = serde_json::from_value(meta["options"].clone())?;
        let k = counts.len();
        if archive.matrices.len() != 2 * k {
            return Err(Error::ManifestMismatch(format!("{} matrices for {k} classes", archive.matrices.len())));
        }
        let mut stats = Self::empty(options);
        for j in 0..k {
            let up = |m: &Array2<f32>| m.mapv(|v| v as f64);
            stats.push(up(&archive.matrices[j]), up(&archive.matrices[k + j]), counts[j])?;
        }
        Ok(stats)
    }
}
