use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use quivernet::data_io::{gaussian_blobs, load_mnist_dir, Dataset, Split, MNIST_FILES};
use quivernet::nn::{Activation, MlpSpec, TrainConfig};
use quivernet::pipeline::PipelineConfig;
use quivernet::verify::VerifyConfig;
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    /// The four uncompressed IDX files of MNIST or FashionMNIST.
    Mnist { dir: PathBuf },
    /// Separable Gaussian clusters, for smoke runs.
    Blobs {
        train: usize,
        test: usize,
        dim: usize,
        classes: usize,
        noise: f64,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        Self::Mnist {
            dir: PathBuf::from("data/mnist"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            activation: Activation::Relu,
        }
    }
}

/// One run: data, model, training, attacks and detection. Every seed in the
/// run is derived from `seed`, and the resolved file is written next to the
/// outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub detect: PipelineConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            detect: PipelineConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a TOML file. Relative data paths are taken from the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        if let DataConfig::Mnist { dir } = &mut cfg.data {
            if dir.is_relative() {
                *dir = path.parent().unwrap_or(Path::new(".")).join(&*dir);
            }
        }
        Ok(cfg)
    }

    /// Applies command-line overrides and spreads `seed` over the components.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
        let s = self.seed;
        self.train.seed = s;
        self.detect.stats_seed = s.wrapping_add(1);
        self.detect.calibration_seed = s.wrapping_add(2);
        self.detect.attack_seed = s.wrapping_add(3);
        self.verify.seed = s;
        self
    }

    pub fn check_paths(&self) -> anyhow::Result<()> {
        if let DataConfig::Mnist { dir } = &self.data {
            for f in MNIST_FILES {
                if !dir.join(f).is_file() {
                    bail!(ConfigError(format!("dataset file {} does not exist", dir.join(f).display())));
                }
            }
        }
        Ok(())
    }

    pub fn load_data(&self) -> anyhow::Result<(Dataset, Dataset)> {
        self.check_paths()?;
        Ok(match &self.data {
            DataConfig::Mnist { dir } => load_mnist_dir(dir)?,
            DataConfig::Blobs {
                train,
                test,
                dim,
                classes,
                noise,
            } => (
                gaussian_blobs(*train, *dim, *classes, *noise, self.seed, Split::Train)?,
                gaussian_blobs(*test, *dim, *classes, *noise, self.seed, Split::Test)?,
            ),
        })
    }

    pub fn spec(&self, data: &Dataset) -> MlpSpec {
        MlpSpec::new(data.input_dim(), self.model.hidden.clone(), data.class_count())
            .with_activation(self.model.activation)
            .with_seed(self.seed)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default().resolve(Some(9), None);
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.detect.attack_seed, 12);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 4
            [data]
            kind = "blobs"
            train = 100
            test = 20
            dim = 5
            classes = 3
            noise = 0.1
            [detect]
            attacks = [{ method = "fgsm", eps = 0.2 }]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.model, ModelConfig::default());
        assert_eq!(cfg.detect.attacks.len(), 1);
        assert_eq!(cfg.detect.stats_per_class, 1000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
    }
}
