use ndarray::{Array1, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, Real};

/// Per-hidden-neuron rescaling `tau`. Input and output neurons are fixed.
/// `scales[l]` holds one factor per neuron of hidden layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Isomorphism {
    pub scales: Vec<Array1<f64>>,
}

impl Isomorphism {
    pub fn identity<F: Real>(mlp: &Mlp<F>) -> Self {
        Self {
            scales: mlp.spec().hidden.iter().map(|&n| Array1::ones(n)).collect(),
        }
    }

    /// Factors drawn uniformly from `[lo, hi)`.
    pub fn random<F: Real, R: Rng>(mlp: &Mlp<F>, lo: f64, hi: f64, rng: &mut R) -> Self {
        Self {
            scales: mlp
                .spec()
                .hidden
                .iter()
                .map(|&n| Array1::from_shape_simple_fn(n, || rng.random_range(lo..hi)))
                .collect(),
        }
    }
}

/// The isomorphic network `V`: incoming weights and bias of every hidden
/// neuron `q` are multiplied by `tau_q`, its outgoing weights divided by it.
pub fn apply_isomorphism<F: Real>(mlp: &Mlp<F>, iso: &Isomorphism) -> Result<Mlp<F>> {
    let hidden = &mlp.spec().hidden;
    if iso.scales.len() != hidden.len() || iso.scales.iter().zip(hidden).any(|(s, &n)| s.len() != n) {
        return Err(Error::InvalidIsomorphism(format!(
            "scales for layers {:?}, network hidden sizes {hidden:?}",
            iso.scales.iter().map(|s| s.len()).collect::<Vec<_>>()
        )));
    }
    for (layer, s) in iso.scales.iter().enumerate() {
        for (neuron, &value) in s.iter().enumerate() {
            if !value.is_finite() || value == 0.0 {
                return Err(Error::InvalidIsomorphism(format!(
                    "scale {value} at layer {layer}, neuron {neuron}"
                )));
            }
            // tau f tau^-1 is ReLU again only for positive tau
            if mlp.activation() == Activation::Relu && value < 0.0 {
                return Err(Error::NonPositiveScaleForReLU { layer, neuron, value });
            }
        }
    }

    let mut v = mlp.clone();
    for (l, tau) in iso.scales.iter().enumerate() {
        let t = tau.mapv(F::of);
        let inv = tau.mapv(|s| F::of(1.0 / s));
        v.weights_mut()[l] *= &t.view().insert_axis(Axis(1));
        v.biases_mut()[l] *= &t;
        v.weights_mut()[l + 1] *= &inv.view().insert_axis(Axis(0));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpSpec;
    use ndarray::Array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_scaling_is_a_no_op() {
        let mlp = Mlp::<f64>::init(&MlpSpec::new(5, vec![4, 3], 2).with_seed(1)).unwrap();
        assert_eq!(apply_isomorphism(&mlp, &Isomorphism::identity(&mlp)).unwrap(), mlp);
    }

    #[test]
    fn logits_invariant_and_activations_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::<f64>::init(&MlpSpec::new(6, vec![5, 4], 3).with_seed(2)).unwrap();
        let iso = Isomorphism::random(&mlp, 0.1, 10.0, &mut rng);
        let v = apply_isomorphism(&mlp, &iso).unwrap();
        for _ in 0..100 {
            let x = Array::from_shape_simple_fn(6, || rng.random::<f64>());
            let tw = mlp.forward(x.view()).unwrap();
            let tv = v.forward(x.view()).unwrap();
            for (a, b) in tv.logits().iter().zip(tw.logits()) {
                assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()));
            }
            for (l, tau) in iso.scales.iter().enumerate() {
                for ((av, aw), t) in tv.act[l].iter().zip(&tw.act[l]).zip(tau) {
                    assert!((av - t * aw).abs() <= 1e-12 * (1.0 + av.abs()));
                }
            }
        }
    }

    #[test]
    fn negative_scales() {
        let relu = Mlp::<f64>::init(&MlpSpec::new(2, vec![2], 2)).unwrap();
        let mut iso = Isomorphism::identity(&relu);
        iso.scales[0][1] = -2.0;
        assert!(matches!(
            apply_isomorphism(&relu, &iso),
            Err(Error::NonPositiveScaleForReLU { layer: 0, neuron: 1, .. })
        ));

        // linear hidden layers accept any non-zero factor
        let lin = Mlp::<f64>::init(&MlpSpec::new(2, vec![2], 2).with_activation(Activation::Identity).with_seed(4)).unwrap();
        let v = apply_isomorphism(&lin, &iso).unwrap();
        let x = Array::from(vec![0.3, 0.8]);
        let (a, b) = (lin.forward(x.view()).unwrap(), v.forward(x.view()).unwrap());
        assert!(a.logits().iter().zip(b.logits()).all(|(p, q)| (p - q).abs() < 1e-12));

        iso.scales[0][1] = 0.0;
        assert!(matches!(apply_isomorphism(&lin, &iso), Err(Error::InvalidIsomorphism(_))));
        iso.scales.pop();
        assert!(matches!(apply_isomorphism(&lin, &iso), Err(Error::InvalidIsomorphism(_))));
    }
}
