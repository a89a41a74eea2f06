use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{Activation, ForwardTrace, Mlp, Real};

/// How activation / pre-activation ratios are formed when the
/// pre-activation is (numerically) zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPolicy {
    /// `|p| <= zero_threshold` counts as zero.
    pub zero_threshold: f64,
    /// Ratio used when the activation has no known limit at zero.
    pub fallback: f64,
}

impl Default for RatioPolicy {
    fn default() -> Self {
        Self {
            zero_threshold: 1e-12,
            fallback: 0.0,
        }
    }
}

impl RatioPolicy {
    /// Ratio `a / p` for one neuron and whether the near-zero branch fired
    /// with a non-zero activation.
    #[inline]
    pub fn ratio(&self, activation: Activation, p: f64, a: f64) -> (f64, bool) {
        if p.abs() > self.zero_threshold {
            let r = a / p;
            // ReLU gives -0.0 for negative p
            (if r == 0.0 { 0.0 } else { r }, false)
        } else {
            let r = activation.ratio_limit().unwrap_or(self.fallback);
            (r, a != 0.0)
        }
    }

    /// Ratio vector for hidden layer `l` of `trace`, plus the near-zero hit count.
    pub fn layer_ratios(&self, activation: Activation, trace: &ForwardTrace, l: usize) -> (Array1<f64>, usize) {
        let mut hits = 0;
        let r = trace.pre[l]
            .iter()
            .zip(&trace.act[l])
            .map(|(&p, &a)| {
                let (r, hit) = self.ratio(activation, p, a);
                hits += hit as usize;
                r
            })
            .collect();
        (r, hits)
    }
}

/// Data-dependent affine map of one layer: `block` is `W_l` with its columns
/// scaled by the ratios of the layer's source neurons (or by `x` for the
/// first layer); `bias` is `b_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerContribution {
    pub layer: usize,
    pub block: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeMap {
    pub layers: Vec<LayerContribution>,
    pub near_zero: usize,
}

/// Arrow values of the knowledge map for a chain MLP, grouped per layer.
pub fn knowledge_map<F: Real>(mlp: &Mlp<F>, trace: &ForwardTrace, policy: &RatioPolicy) -> Result<KnowledgeMap> {
    mlp.check_trace(trace)?;
    let mut near_zero = 0;
    let mut layers = Vec::with_capacity(mlp.layers());
    for l in 0..mlp.layers() {
        let scale = if l == 0 {
            trace.input.clone()
        } else {
            let (r, hits) = policy.layer_ratios(mlp.activation(), trace, l - 1);
            near_zero += hits;
            r
        };
        let w = F::matrix_f64(&mlp.weights()[l]);
        let block = &*w * &scale.insert_axis(Axis(0));
        layers.push(LayerContribution {
            layer: l,
            block,
            bias: F::vector_f64(&mlp.biases()[l]).into_owned(),
        });
    }
    Ok(KnowledgeMap { layers, near_zero })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpSpec;
    use ndarray::Array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_network_ratios_are_one() {
        let mlp = Mlp::<f64>::init(&MlpSpec::new(4, vec![3, 3], 2).with_activation(Activation::Identity).with_seed(1)).unwrap();
        let x = Array::from(vec![0.1, 0.5, 0.0, 0.9]);
        let t = mlp.forward(x.view()).unwrap();
        let km = knowledge_map(&mlp, &t, &RatioPolicy::default()).unwrap();
        assert_eq!(km.layers[0].block, &mlp.weights()[0] * &x.clone().insert_axis(Axis(0)));
        for l in 1..3 {
            for (a, b) in km.layers[l].block.iter().zip(mlp.weights()[l].iter()) {
                assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn relu_ratios_are_exact_indicators() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::<f64>::init(&MlpSpec::new(6, vec![16, 16], 3).with_seed(3)).unwrap();
        let policy = RatioPolicy::default();
        for _ in 0..20 {
            let x = Array::from_shape_simple_fn(6, || rng.random_range(-1.0..1.0));
            let t = mlp.forward(x.view()).unwrap();
            for l in 0..2 {
                let (r, hits) = policy.layer_ratios(Activation::Relu, &t, l);
                assert_eq!(hits, 0);
                for (ri, pi) in r.iter().zip(&t.pre[l]) {
                    assert!(*ri == 0.0 || *ri == 1.0);
                    assert_eq!(*ri == 1.0, *pi > 0.0);
                    assert!(ri.is_sign_positive());
                }
            }
        }
    }

    #[test]
    fn all_positive_preactivations_give_unit_ratios() {
        let spec = MlpSpec::new(2, vec![2], 1);
        let mlp = Mlp::<f64>::from_parts(
            spec,
            vec![Array2::from_elem((2, 2), 1.0), Array2::from_elem((1, 2), 1.0)],
            vec![Array1::from_elem(2, 0.5), Array1::zeros(1)],
        )
        .unwrap();
        let t = mlp.forward(Array::from(vec![0.3, 0.2]).view()).unwrap();
        let (r, _) = RatioPolicy::default().layer_ratios(Activation::Relu, &t, 0);
        assert_eq!(r.to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn near_zero_preactivation_is_counted() {
        let policy = RatioPolicy {
            zero_threshold: 1e-6,
            fallback: 0.0,
        };
        assert_eq!(policy.ratio(Activation::Relu, 1e-7, 1e-7), (0.0, true));
        assert_eq!(policy.ratio(Activation::Relu, -1e-7, 0.0), (0.0, false));
        assert_eq!(policy.ratio(Activation::Identity, 1e-7, 1e-7), (1.0, true));
        assert_eq!(policy.ratio(Activation::Relu, 2.0, 2.0), (1.0, false));
    }

    #[test]
    fn foreign_trace_is_rejected() {
        let a = Mlp::<f64>::init(&MlpSpec::new(3, vec![4], 2)).unwrap();
        let b = Mlp::<f64>::init(&MlpSpec::new(3, vec![5], 2)).unwrap();
        let t = b.forward(Array::from(vec![0.0; 3]).view()).unwrap();
        assert!(knowledge_map(&a, &t, &RatioPolicy::default()).is_err());
    }
}
