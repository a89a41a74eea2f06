use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden-layer activation. Input and output neurons always use the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, p: f64) -> f64 {
        match self {
            Activation::Relu => p.max(0.0),
            Activation::Identity => p,
        }
    }

    /// Derivative at `p`; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, p: f64) -> f64 {
        match self {
            Activation::Relu => {
                if p > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    /// Ratio `f(p) / p` to use when `p` is numerically zero, if the
    /// activation has a natural choice: ReLU takes its value on the
    /// non-positive side (0), the identity is 1 everywhere.
    #[inline]
    pub fn ratio_limit(self) -> Option<f64> {
        match self {
            Activation::Relu => Some(0.0),
            Activation::Identity => Some(1.0),
        }
    }
}

/// Architecture of a fully-connected network: `d -> hidden... -> k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim,
            activation: Activation::Relu,
            seed: 0,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `[d, h_1, ..., h_m, k]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.input_dim);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.output_dim);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes().contains(&0) {
            return Err(Error::InvalidSpec(format!("zero-width layer in {:?}", self.layer_sizes())));
        }
        Ok(())
    }
}

/// Number of weights plus biases: `sum_l n_l * n_{l-1} + n_l`.
pub fn param_count(spec: &MlpSpec) -> usize {
    spec.layer_sizes().windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

/// Number of weights only, without biases.
pub fn weight_count(spec: &MlpSpec) -> usize {
    spec.layer_sizes().windows(2).map(|w| w[1] * w[0]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(param_count(&MlpSpec::new(784, vec![500; 5], 10)), 1_399_510);
        assert_eq!(param_count(&MlpSpec::new(1, vec![], 1)), 2);

        // arithmetic oracle for 8 x [1000]
        let oracle = (784 * 1000 + 1000) + 7 * (1000 * 1000 + 1000) + (1000 * 10 + 10);
        assert_eq!(param_count(&MlpSpec::new(784, vec![1000; 8], 10)), oracle);
        assert_eq!(oracle, 7_802_010);
    }

    #[test]
    fn published_sizes_count_weights_only() {
        // millions, truncated to two decimals
        let millions = |hidden: Vec<usize>| (weight_count(&MlpSpec::new(784, hidden, 10)) / 10_000) as f64 / 100.0;
        assert_eq!(millions(vec![500; 5]), 1.39);
        assert_eq!(millions(vec![1000; 8]), 7.79);
        assert_eq!(millions(vec![1000; 20]), 19.79);
        assert_eq!(millions(vec![10000; 2]), 107.94);
        assert_eq!(millions(vec![10000; 5]), 407.94);
    }

    #[test]
    fn zero_width_is_invalid() {
        assert!(MlpSpec::new(3, vec![0], 2).validate().is_err());
        assert!(MlpSpec::new(3, vec![4], 2).validate().is_ok());
    }

    #[test]
    fn relu_ratio_limits() {
        assert_eq!(Activation::Relu.ratio_limit(), Some(0.0));
        assert_eq!(Activation::Identity.ratio_limit(), Some(1.0));
    }
}
