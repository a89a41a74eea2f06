use ndarray::{Array2, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{argmax, softmax_cross_entropy, Reduction};
use super::mlp::Mlp;
use super::optim::{build_optimizer, OptimizerConfig};
use super::real::Real;
use crate::data_io::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Multiply the learning rate by 0.1 every `lr_step` epochs.
    #[serde(default)]
    pub lr_step: Option<usize>,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Adam at 1e-3, batch 128, 6 epochs, learning rate divided by 10 every 3.
    fn default() -> Self {
        let mut cfg = Self::new(OptimizerConfig::adam(), 1e-3, 128, 6);
        cfg.lr_step = Some(3);
        cfg
    }
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerConfig, lr: f64, batch_size: usize, epochs: usize) -> Self {
        Self {
            optimizer,
            lr,
            batch_size,
            epochs,
            lr_step: None,
            weight_decay: 0.0,
            dropout: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted: it is a useful no-op run
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate {}", self.lr)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("batch size and epochs must be >= 1".into()));
        }
        if self.lr_step == Some(0) {
            return Err(Error::InvalidConfig("lr_step must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("negative weight decay".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_step {
            Some(step) => self.lr * 0.1f64.powi((epoch / step) as i32),
            None => self.lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean mini-batch loss over the epoch (training mode).
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
}

fn to_real<F: Real>(x: Array2<f32>) -> Array2<F> {
    x.mapv(|v| F::of(v as f64))
}

/// Mini-batch training with softmax cross-entropy. The shuffle order,
/// dropout masks and initialization are all seeded, so identical inputs
/// give bitwise-identical models.
pub fn train<F: Real>(
    mut mlp: Mlp<F>,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(Mlp<F>, Vec<EpochStats>)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    if train_set.input_dim() != mlp.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} inputs, network {}",
            train_set.input_dim(),
            mlp.input_dim()
        )));
    }
    let mut optimizer = build_optimizer::<F>(&cfg.optimizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let wd = F::of(cfg.weight_decay);
    let mut curves = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut batches) = (0.0, 0usize, 0usize);

        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = to_real::<F>(train_set.gather(chunk));
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set.label(i)).collect();
            let dropout = (cfg.dropout > 0.0).then_some((cfg.dropout, &mut rng));
            let trace = mlp.forward_batch(x.view(), dropout);
            let (loss, dlogits) = softmax_cross_entropy(trace.logits().view(), &labels, Reduction::Mean);
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch, batch: b });
            }
            correct += trace
                .logits()
                .rows()
                .into_iter()
                .zip(&labels)
                .filter(|(r, &l)| argmax(r.iter().map(|v| v.as_f64())) == l)
                .count();
            let (mut grads, _) = mlp.backward_batch(&trace, dlogits, false);
            if cfg.weight_decay > 0.0 {
                for (g, w) in grads.weights.iter_mut().zip(mlp.weights()) {
                    Zip::from(g).and(w).for_each(|g, &w| *g += wd * w);
                }
                for (g, bias) in grads.biases.iter_mut().zip(mlp.biases()) {
                    Zip::from(g).and(bias).for_each(|g, &b| *g += wd * b);
                }
            }
            optimizer.step(&mut mlp, &grads, lr);
            loss_sum += loss;
            batches += 1;
        }
        if !mlp.is_finite() {
            return Err(Error::DivergedLoss { epoch, batch: batches });
        }

        let (test_loss, test_accuracy) = match test_set {
            Some(t) => {
                let (l, a) = evaluate(&mlp, t);
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        curves.push(EpochStats {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / batches as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            test_loss,
            test_accuracy,
        });
    }
    Ok((mlp, curves))
}

const EVAL_CHUNK: usize = 1000;

/// Mean cross-entropy and accuracy (argmax, lowest index on ties).
pub fn evaluate<F: Real>(mlp: &Mlp<F>, dataset: &Dataset) -> (f64, f64) {
    if dataset.is_empty() {
        return (0.0, 0.0);
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    let idx: Vec<usize> = (0..dataset.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let logits = mlp.logits_batch(to_real::<F>(dataset.gather(chunk)).view());
        let labels: Vec<usize> = chunk.iter().map(|&i| dataset.label(i)).collect();
        loss += softmax_cross_entropy(logits.view(), &labels, Reduction::Sum).0;
        correct += logits
            .rows()
            .into_iter()
            .zip(&labels)
            .filter(|(r, &l)| argmax(r.iter().map(|v| v.as_f64())) == l)
            .count();
    }
    (loss / dataset.len() as f64, correct as f64 / dataset.len() as f64)
}

pub fn accuracy<F: Real>(mlp: &Mlp<F>, dataset: &Dataset) -> f64 {
    evaluate(mlp, dataset).1
}

/// Predicted class for every sample of `dataset`.
pub fn predictions<F: Real>(mlp: &Mlp<F>, dataset: &Dataset) -> Vec<usize> {
    let idx: Vec<usize> = (0..dataset.len()).collect();
    idx.chunks(EVAL_CHUNK)
        .flat_map(|chunk| mlp.predict_batch(to_real::<F>(dataset.gather(chunk)).view()))
        .collect()
}

pub fn curves_csv(curves: &[EpochStats]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "lr", "train_loss", "train_accuracy", "test_loss", "test_accuracy"])?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for c in curves {
        w.write_record([
            c.epoch.to_string(),
            format!("{:e}", c.lr),
            format!("{:.6}", c.train_loss),
            format!("{:.6}", c.train_accuracy),
            opt(c.test_loss),
            opt(c.test_accuracy),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::Split;
    use crate::nn::MlpSpec;
    use rand::Rng;

    /// Two Gaussian blobs in the unit square, linearly separable.
    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut px = Vec::with_capacity(n * 2);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 2;
            let centre = if c == 0 { 0.25 } else { 0.75 };
            for _ in 0..2 {
                px.push((centre + rng.random_range(-0.2..0.2f32)).clamp(0.0, 1.0));
            }
            labels.push(c);
        }
        Dataset::new(Array2::from_shape_vec((n, 2), px).unwrap(), labels, 2, Split::Train).unwrap()
    }

    #[test]
    fn learns_separable_blobs() {
        let ds = blobs(400, 1);
        let mlp = Mlp::<f32>::init(&MlpSpec::new(2, vec![16], 2).with_seed(3)).unwrap();
        let mut cfg = TrainConfig::new(OptimizerConfig::adam(), 0.01, 16, 30);
        cfg.seed = 4;
        let (mlp, curves) = train(mlp, &ds, Some(&ds), &cfg).unwrap();
        assert_eq!(curves.len(), 30);
        assert!(accuracy(&mlp, &ds) > 0.95);
        assert!(curves.last().unwrap().train_loss < curves[0].train_loss);
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let ds = blobs(64, 2);
        let mlp = Mlp::<f32>::init(&MlpSpec::new(2, vec![4], 2)).unwrap();
        for name in ["sgd", "momentum", "adam"] {
            let cfg = TrainConfig::new(OptimizerConfig::named(name), 0.0, 8, 2);
            let (after, curves) = train(mlp.clone(), &ds, None, &cfg).unwrap();
            assert_eq!(after, mlp);
            assert_eq!(curves[0].train_loss, curves[1].train_loss);
        }
    }

    #[test]
    fn bitwise_reproducible_with_dropout_and_decay() {
        let ds = blobs(128, 3);
        let mlp = Mlp::<f32>::init(&MlpSpec::new(2, vec![8, 8], 2).with_seed(9)).unwrap();
        let mut cfg = TrainConfig::new(OptimizerConfig::momentum(), 0.05, 10, 3);
        cfg.dropout = 0.2;
        cfg.weight_decay = 1e-4;
        cfg.lr_step = Some(2);
        cfg.seed = 17;
        let (a, ca) = train(mlp.clone(), &ds, None, &cfg).unwrap();
        let (b, cb) = train(mlp, &ds, None, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
        assert_eq!(ca[2].lr, 0.05 * 0.1);
    }

    #[test]
    fn divergence_is_reported() {
        let ds = blobs(64, 4);
        let mlp = Mlp::<f32>::init(&MlpSpec::new(2, vec![8], 2)).unwrap();
        let cfg = TrainConfig::new(OptimizerConfig::sgd(), 1e30, 8, 3);
        assert!(matches!(train(mlp, &ds, None, &cfg), Err(Error::DivergedLoss { .. })));
    }

    #[test]
    fn constant_logits_pick_class_zero() {
        // balanced 10-class data; zero net predicts class 0 everywhere
        let n = 100;
        let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
        let ds = Dataset::new(Array2::zeros((n, 3)), labels, 10, Split::Test).unwrap();
        let mut mlp = Mlp::<f32>::init(&MlpSpec::new(3, vec![], 10)).unwrap();
        mlp.weights_mut()[0].fill(0.0);
        assert_eq!(accuracy(&mlp, &ds), 0.1);
    }

    #[test]
    fn memorizes_one_sample() {
        let ds = Dataset::new(Array2::from_elem((1, 2), 0.5), vec![1], 2, Split::Train).unwrap();
        let mlp = Mlp::<f32>::init(&MlpSpec::new(2, vec![4], 2).with_seed(1)).unwrap();
        let (mlp, _) = train(mlp, &ds, None, &TrainConfig::new(OptimizerConfig::sgd(), 0.5, 1, 20)).unwrap();
        assert_eq!(accuracy(&mlp, &ds), 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::new(OptimizerConfig::sgd(), 0.1, 0, 1);
        assert!(cfg.validate().is_err());
        cfg.batch_size = 1;
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
        cfg.dropout = 0.0;
        cfg.lr = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn curves_render() {
        let c = EpochStats {
            epoch: 1,
            lr: 1e-3,
            train_loss: 0.5,
            train_accuracy: 0.9,
            test_loss: None,
            test_accuracy: Some(0.8),
        };
        let csv = curves_csv(&[c]).unwrap();
        assert_eq!(csv.lines().nth(1).unwrap(), "1,1e-3,0.500000,0.900000,,0.800000");
    }
}
