use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{argmax, softmax_cross_entropy, Reduction};
use super::real::Real;
use super::spec::{Activation, MlpSpec};
use crate::error::{Error, Result};

/// A fully-connected network. Layer `l` maps `n_l` to `n_{l+1}` neurons with
/// weight `W_l` (`n_{l+1} x n_l`) and bias `b_l`; the activation is applied
/// on hidden layers only.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F: Real = f32> {
    spec: MlpSpec,
    weights: Vec<Array2<F>>,
    biases: Vec<Array1<F>>,
}

/// Parameter-shaped buffers (gradients, optimizer moments).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F: Real = f32> {
    pub weights: Vec<Array2<F>>,
    pub biases: Vec<Array1<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(mlp: &Mlp<F>) -> Self {
        Self {
            weights: mlp.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: mlp.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }
}

/// Batched activations recorded by a forward pass, rows are samples.
#[derive(Debug, Clone)]
pub struct BatchTrace<F: Real> {
    pub input: Array2<F>,
    pub pre: Vec<Array2<F>>,
    pub act: Vec<Array2<F>>,
    /// Inverted-dropout masks on hidden activations (training only).
    pub masks: Option<Vec<Array2<F>>>,
}

impl<F: Real> BatchTrace<F> {
    pub fn logits(&self) -> &Array2<F> {
        self.act.last().expect("network has at least one layer")
    }
}

/// Per-sample trace in `f64`: pre-activations `p_l` and activations `a_l`
/// for every layer. The last layer is the identity, so its activation is
/// the logit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Array1<f64>,
    pub pre: Vec<Array1<f64>>,
    pub act: Vec<Array1<f64>>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Array1<f64> {
        self.act.last().expect("trace has at least one layer")
    }

    /// Input of layer `l`: `x` for the first layer, else `a_{l-1}`.
    pub fn layer_input(&self, l: usize) -> &Array1<f64> {
        if l == 0 {
            &self.input
        } else {
            &self.act[l - 1]
        }
    }

    pub fn layers(&self) -> usize {
        self.pre.len()
    }

    pub fn predicted(&self) -> usize {
        argmax(self.logits().iter().copied())
    }
}

fn activate<F: Real>(activation: Activation, z: &mut Array2<F>) {
    if activation == Activation::Relu {
        z.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
    }
}

impl<F: Real> Mlp<F> {
    /// He-style uniform initialization, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`,
    /// zero biases, seeded by `spec.seed`.
    pub fn init(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let sizes = spec.layer_sizes();
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((fan_out, fan_in), || {
                F::of(rng.random_range(-bound..bound))
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            spec: spec.clone(),
            weights,
            biases,
        })
    }

    pub fn from_parts(spec: MlpSpec, weights: Vec<Array2<F>>, biases: Vec<Array1<F>>) -> Result<Self> {
        spec.validate()?;
        let sizes = spec.layer_sizes();
        if weights.len() != sizes.len() - 1 || biases.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weight / {} bias arrays for {} layers",
                weights.len(),
                biases.len(),
                sizes.len() - 1
            )));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.dim() != (sizes[l + 1], sizes[l]) || b.len() != sizes[l + 1] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l}: weight {:?}, bias {}, expected ({}, {})",
                    w.dim(),
                    b.len(),
                    sizes[l + 1],
                    sizes[l]
                )));
            }
        }
        Ok(Self { spec, weights, biases })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn activation(&self) -> Activation {
        self.spec.activation
    }

    /// Number of affine layers `L` (hidden layers + 1).
    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn weights(&self) -> &[Array2<F>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<F>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<F>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<F>] {
        &mut self.biases
    }

    pub fn cast<G: Real>(&self) -> Mlp<G> {
        Mlp {
            spec: self.spec.clone(),
            weights: self.weights.iter().map(|w| w.mapv(|v| G::of(v.as_f64()))).collect(),
            biases: self.biases.iter().map(|b| b.mapv(|v| G::of(v.as_f64()))).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Inference-only batched logits.
    pub fn logits_batch(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(&w.t());
            z += b;
            if l + 1 < self.layers() {
                activate(self.spec.activation, &mut z);
            }
            a = z;
        }
        a
    }

    /// Predicted classes (lowest index wins ties).
    pub fn predict_batch(&self, x: ArrayView2<F>) -> Vec<usize> {
        self.logits_batch(x)
            .rows()
            .into_iter()
            .map(|r| argmax(r.iter().map(|v| v.as_f64())))
            .collect()
    }

    /// Batched forward pass keeping every layer. With `dropout = Some((p, rng))`
    /// hidden activations are multiplied by inverted-dropout masks.
    pub fn forward_batch(&self, x: ArrayView2<F>, dropout: Option<(f64, &mut ChaCha8Rng)>) -> BatchTrace<F> {
        let layers = self.layers();
        let mut pre = Vec::with_capacity(layers);
        let mut act: Vec<Array2<F>> = Vec::with_capacity(layers);
        let mut masks = dropout.as_ref().map(|_| Vec::with_capacity(layers.saturating_sub(1)));
        let mut dropout = dropout.filter(|(p, _)| *p > 0.0);

        for l in 0..layers {
            let input = if l == 0 { x } else { act[l - 1].view() };
            let mut z = input.dot(&self.weights[l].t());
            z += &self.biases[l];
            let mut a = z.clone();
            if l + 1 < layers {
                activate(self.spec.activation, &mut a);
                if let Some(m) = masks.as_mut() {
                    let mask = match dropout.as_mut() {
                        Some((p, rng)) => {
                            let keep = 1.0 - *p;
                            let scale = F::of(1.0 / keep);
                            Array2::from_shape_simple_fn(a.raw_dim(), || {
                                if rng.random::<f64>() < keep {
                                    scale
                                } else {
                                    F::zero()
                                }
                            })
                        }
                        None => Array2::ones(a.raw_dim()),
                    };
                    a *= &mask;
                    m.push(mask);
                }
            }
            pre.push(z);
            act.push(a);
        }
        BatchTrace {
            input: x.to_owned(),
            pre,
            act,
            masks,
        }
    }

    /// Backpropagates `dlogits` (gradient of the loss w.r.t. the logits).
    /// Returns parameter gradients and, if requested, the input gradient.
    pub fn backward_batch(
        &self,
        trace: &BatchTrace<F>,
        dlogits: Array2<F>,
        input_grad: bool,
    ) -> (Gradients<F>, Option<Array2<F>>) {
        let weights: Vec<&Array2<F>> = self.weights.iter().collect();
        backprop(&weights, self.spec.activation, trace, dlogits, true, input_grad)
    }

    /// Gradient w.r.t. the input only; parameter gradients are skipped.
    pub fn input_gradient(&self, trace: &BatchTrace<F>, dlogits: Array2<F>) -> Array2<F> {
        let weights: Vec<&Array2<F>> = self.weights.iter().collect();
        backprop(&weights, self.spec.activation, trace, dlogits, false, true)
            .1
            .expect("input gradient requested")
    }

    /// Summed softmax cross-entropy at `labels` and its gradient w.r.t. the input.
    pub fn loss_input_gradient(&self, x: ArrayView2<F>, labels: &[usize]) -> (f64, Array2<F>) {
        let trace = self.forward_batch(x, None);
        let (loss, dlogits) = softmax_cross_entropy(trace.logits().view(), labels, Reduction::Sum);
        (loss, self.input_gradient(&trace, dlogits))
    }

    /// Mean softmax cross-entropy loss, its gradients, and the input gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<F>, labels: &[usize], reduction: Reduction) -> (f64, Gradients<F>, Array2<F>) {
        let trace = self.forward_batch(x, None);
        let (loss, dlogits) = softmax_cross_entropy(trace.logits().view(), labels, reduction);
        let (grads, gx) = self.backward_batch(&trace, dlogits, true);
        (loss, grads, gx.expect("input gradient requested"))
    }

    /// Per-sample forward pass in `f64`.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<ForwardTrace> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("input has non-finite entries".into()));
        }
        let layers = self.layers();
        let mut pre = Vec::with_capacity(layers);
        let mut act: Vec<Array1<f64>> = Vec::with_capacity(layers);
        for l in 0..layers {
            let w = F::matrix_f64(&self.weights[l]);
            let b = F::vector_f64(&self.biases[l]);
            let input = if l == 0 { x } else { act[l - 1].view() };
            let p = w.dot(&input) + &*b;
            let a = if l + 1 < layers {
                p.mapv(|v| self.spec.activation.apply(v))
            } else {
                p.clone()
            };
            pre.push(p);
            act.push(a);
        }
        Ok(ForwardTrace {
            input: x.to_owned(),
            pre,
            act,
        })
    }

    /// Per-sample gradients in `f64` of the softmax cross-entropy loss at
    /// `label`, w.r.t. every parameter and the input.
    pub fn backward(&self, trace: &ForwardTrace, label: usize) -> Result<(Gradients<f64>, Array1<f64>)> {
        self.check_trace(trace)?;
        if label >= self.output_dim() {
            return Err(Error::ShapeMismatch(format!("label {label} >= {}", self.output_dim())));
        }
        let row = |v: &Array1<f64>| v.clone().insert_axis(Axis(0));
        let batch = BatchTrace {
            input: row(&trace.input),
            pre: trace.pre.iter().map(row).collect(),
            act: trace.act.iter().map(row).collect(),
            masks: None,
        };
        let (_, dlogits) = softmax_cross_entropy(batch.logits().view(), &[label], Reduction::Sum);
        let weights: Vec<_> = self.weights.iter().map(F::matrix_f64).collect();
        let refs: Vec<&Array2<f64>> = weights.iter().map(|w| w.as_ref()).collect();
        let (grads, gx) = backprop(&refs, self.spec.activation, &batch, dlogits, true, true);
        let gx = gx.expect("input gradient requested").index_axis_move(Axis(0), 0);
        Ok((grads, gx))
    }

    pub(crate) fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        let sizes = self.spec.layer_sizes();
        let ok = trace.input.len() == sizes[0]
            && trace.pre.len() == self.layers()
            && trace.act.len() == self.layers()
            && trace
                .pre
                .iter()
                .zip(&trace.act)
                .zip(&sizes[1..])
                .all(|((p, a), &n)| p.len() == n && a.len() == n);
        if ok {
            Ok(())
        } else {
            Err(Error::TraceMismatch(format!("network sizes {sizes:?}")))
        }
    }
}

fn backprop<F: Real>(
    weights: &[&Array2<F>],
    activation: Activation,
    trace: &BatchTrace<F>,
    mut delta: Array2<F>,
    params: bool,
    input_grad: bool,
) -> (Gradients<F>, Option<Array2<F>>) {
    let layers = weights.len();
    let mut gw = Vec::with_capacity(layers);
    let mut gb = Vec::with_capacity(layers);
    let mut gx = None;
    for l in (0..layers).rev() {
        let input = if l == 0 { &trace.input } else { &trace.act[l - 1] };
        if params {
            gw.push(delta.t().dot(input));
            gb.push(delta.sum_axis(Axis(0)));
        }
        if l == 0 {
            if input_grad {
                gx = Some(delta.dot(weights[0]));
            }
            break;
        }
        let mut prev = delta.dot(weights[l]);
        Zip::from(&mut prev)
            .and(&trace.pre[l - 1])
            .for_each(|g, &p| *g = *g * F::of(activation.derivative(p.as_f64())));
        if let Some(masks) = &trace.masks {
            prev *= &masks[l - 1];
        }
        delta = prev;
    }
    gw.reverse();
    gb.reverse();
    (
        Gradients {
            weights: gw,
            biases: gb,
        },
        gx,
    )
}
