//! Randomized checks of the structural results on induced matrices, plus a
//! finite-difference check of backpropagation. Each suite reports the
//! largest violation it saw against a fixed tolerance.

use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{Activation, Mlp, MlpSpec};
use crate::quiver::{
    apply_isomorphism, check_convexity, induced_matrix, knowledge_map, logit_norms, norms, region_of, InducedMatrix,
    Isomorphism, RatioPolicy, Region,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub trials: usize,
    /// Trials whose deviation exceeded the tolerance.
    pub violations: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    pub factorization_trials: usize,
    pub isomorphism_nets: usize,
    pub convexity_pairs: usize,
    pub convexity_lambdas: usize,
    pub norm_trials: usize,
    pub m0_samples: usize,
    pub m0_constructed: usize,
    pub gradient_trials: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            factorization_trials: 1000,
            isomorphism_nets: 200,
            convexity_pairs: 10_000,
            convexity_lambdas: 100,
            norm_trials: 1000,
            m0_samples: 1_000_000,
            m0_constructed: 100,
            gradient_trials: 5,
        }
    }
}

/// Tracks the worst deviation of a suite.
struct Tally {
    name: &'static str,
    tolerance: f64,
    trials: usize,
    violations: usize,
    max: f64,
    start: Instant,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            trials: 0,
            violations: 0,
            max: 0.0,
            start: Instant::now(),
        }
    }

    /// Records one trial whose worst deviation is `dev` (NaN counts as a violation).
    fn trial(&mut self, dev: f64) {
        self.trials += 1;
        if !(dev <= self.tolerance) {
            self.violations += 1;
        }
        if dev.is_nan() || dev > self.max {
            self.max = if dev.is_nan() { f64::INFINITY } else { dev };
        }
    }

    fn finish(self) -> SuiteReport {
        SuiteReport {
            name: self.name.to_string(),
            trials: self.trials,
            violations: self.violations,
            max_violation: self.max,
            tolerance: self.tolerance,
            seconds: self.start.elapsed().as_secs_f64(),
        }
    }
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `|a - b|_max / (1 + |b|_max)`.
fn rel_dev<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64> + Clone) -> f64 {
    let scale = max_abs(b.clone().into_iter().copied());
    let diff = max_abs(a.into_iter().zip(b).map(|(x, y)| x - y));
    diff / (1.0 + scale)
}

/// ReLU net with up to three hidden layers, random widths and non-zero biases.
pub fn random_relu_net<R: Rng>(rng: &mut R) -> Mlp<f64> {
    let depth = rng.random_range(0..=3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=16)).collect();
    let spec = MlpSpec::new(rng.random_range(1..=20), hidden, rng.random_range(2..=6)).with_seed(rng.random());
    let mut mlp = Mlp::<f64>::init(&spec).expect("valid spec");
    for b in mlp.biases_mut() {
        b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    mlp
}

fn random_input<R: Rng>(rng: &mut R, d: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(d, || rng.random_range(-1.0..1.0))
}

/// `M 1` against the forward pass.
pub fn verify_factorization(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = RatioPolicy::default();
    let mut tally = Tally::new("factorization", 1e-5);
    for _ in 0..trials {
        let mlp = random_relu_net(&mut rng);
        let x = random_input(&mut rng, mlp.input_dim());
        let trace = mlp.forward(x.view())?;
        let m = induced_matrix(&mlp, x.view(), &policy)?;
        tally.trial(rel_dev(&m.evaluate(), trace.logits()));
    }
    Ok(tally.finish())
}

/// Logits and induced matrices are unchanged by a positive rescaling of the
/// hidden neurons, hidden activations scale by `tau`, and every layer block
/// is conjugated by the scalings.
pub fn verify_isomorphism(nets: usize, seed: u64) -> Result<SuiteReport> {
    const INPUTS_PER_NET: usize = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = RatioPolicy::default();
    let mut tally = Tally::new("isomorphism", 1e-5);
    for _ in 0..nets {
        let w = random_relu_net(&mut rng);
        let iso = Isomorphism::random(&w, 0.1, 10.0, &mut rng);
        let v = apply_isomorphism(&w, &iso)?;
        let tau = |l: usize| -> Array1<f64> {
            if l < iso.scales.len() {
                iso.scales[l].clone()
            } else {
                Array1::ones(w.output_dim())
            }
        };
        for _ in 0..INPUTS_PER_NET {
            let x = random_input(&mut rng, w.input_dim());
            let (tw, tv) = (w.forward(x.view())?, v.forward(x.view())?);
            let mut dev = rel_dev(tv.logits(), tw.logits());

            let (mw, mv) = (induced_matrix(&w, x.view(), &policy)?, induced_matrix(&v, x.view(), &policy)?);
            dev = dev.max(rel_dev(&mv.matrix, &mw.matrix));

            for (l, s) in iso.scales.iter().enumerate() {
                let scaled = &tw.act[l] * s;
                dev = dev.max(rel_dev(&tv.act[l], &scaled));
            }

            let (kw, kv) = (knowledge_map(&w, &tw, &policy)?, knowledge_map(&v, &tv, &policy)?);
            for (l, (cw, cv)) in kw.layers.iter().zip(&kv.layers).enumerate() {
                let mut expected = &cw.block * &tau(l).insert_axis(Axis(1));
                if l > 0 {
                    expected /= &tau(l - 1).insert_axis(Axis(0));
                }
                dev = dev.max(rel_dev(&cv.block, &expected));
                dev = dev.max(rel_dev(&cv.bias, &(&cw.bias * &tau(l))));
            }
            tally.trial(dev);
        }
    }
    Ok(tally.finish())
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Mixtures of two matrices from the same class region stay in it.
pub fn verify_convexity(pairs: usize, lambdas: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("convexity", 0.0);
    for _ in 0..pairs {
        let (k, c) = (rng.random_range(2..=10), rng.random_range(2..=20));
        let a = InducedMatrix::new(gaussian_matrix(&mut rng, k, c), 0);
        let b = loop {
            let b = InducedMatrix::new(gaussian_matrix(&mut rng, k, c), 0);
            if b.region == a.region {
                break b;
            }
        };
        if a.region == Region::Tie {
            continue;
        }
        let mut misses = 0;
        for i in 0..lambdas {
            let lambda = if lambdas == 1 { 0.5 } else { i as f64 / (lambdas - 1) as f64 };
            misses += (!check_convexity(&a, &b, lambda)?) as usize;
        }
        tally.trial(misses as f64);
    }
    Ok(tally.finish())
}

/// Both norm inequalities for `p` in `{1, 2, inf}`; the deviation is how far
/// the right side exceeds the left.
pub fn verify_norm_inequalities(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = RatioPolicy::default();
    let mut tally = Tally::new("norm-inequalities", 1e-9);
    for _ in 0..trials {
        let mlp = random_relu_net(&mut rng);
        let x = random_input(&mut rng, mlp.input_dim());
        let y = random_input(&mut rng, mlp.input_dim());
        let (mx, my) = (induced_matrix(&mlp, x.view(), &policy)?, induced_matrix(&mlp, y.view(), &policy)?);
        let (px, py) = (mlp.forward(x.view())?, mlp.forward(y.view())?);
        let d = norms(my.matrix.view(), mx.matrix.view())?;
        let max_norm = logit_norms(py.logits().view(), px.logits().view(), f64::INFINITY)?;
        let mut dev = max_norm - d.op_inf;
        for p in [1.0, 2.0, f64::INFINITY] {
            dev = dev.max(logit_norms(py.logits().view(), px.logits().view(), p)? - d.vec1);
        }
        tally.trial(dev.max(0.0));
    }
    Ok(tally.finish())
}

/// Gaussian matrices never tie; matrices built with two equal top rows always do.
pub fn verify_tie_region(samples: usize, constructed: usize, seed: u64) -> Result<SuiteReport> {
    const ROWS: usize = 10;
    const COLS: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("tie-region", 0.0);
    let mut hits = 0usize;
    let mut m = Array2::<f64>::zeros((ROWS, COLS));
    for _ in 0..samples {
        m.mapv_inplace(|_| rng.sample(StandardNormal));
        hits += (region_of(m.view()) == Region::Tie) as usize;
    }
    tally.trial(hits as f64);
    let mut missed = 0usize;
    for _ in 0..constructed {
        let mut t = gaussian_matrix(&mut rng, ROWS, COLS);
        let i = rng.random_range(0..ROWS);
        let j = (i + rng.random_range(1..ROWS)) % ROWS;
        let top = t.row(i).to_owned();
        for r in 0..ROWS {
            if r != i {
                t.row_mut(r).assign(&(&top - 1.0));
            }
        }
        t.row_mut(j).assign(&top);
        missed += (region_of(t.view()) != Region::Tie) as usize;
    }
    tally.trial(missed as f64);
    Ok(tally.finish())
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// gradients that vanish up to round-off from dominating.
fn gradient_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

/// Central differences against backpropagation on a `10 -> 8 -> 5` net,
/// for every parameter and every input coordinate.
pub fn verify_gradients(trials: usize, seed: u64) -> Result<SuiteReport> {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("gradient-check", 1e-4);
    for _ in 0..trials {
        let mut mlp = Mlp::<f64>::init(&MlpSpec::new(10, vec![8], 5).with_activation(Activation::Relu).with_seed(rng.random()))?;
        for b in mlp.biases_mut() {
            b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let x = random_input(&mut rng, 10);
        let label = rng.random_range(0..5);
        let trace = mlp.forward(x.view())?;
        let (grads, gx) = mlp.backward(&trace, label)?;
        let loss = |m: &Mlp<f64>, x: &Array1<f64>| -> Result<f64> {
            let t = m.forward(x.view())?;
            let logits = t.logits();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|v| (v - max).exp()).sum();
            Ok(z.ln() + max - logits[label])
        };
        let mut worst = 0.0f64;
        for l in 0..mlp.layers() {
            for idx in 0..mlp.weights()[l].len() {
                let (r, c) = (idx / mlp.weights()[l].ncols(), idx % mlp.weights()[l].ncols());
                let mut plus = mlp.clone();
                plus.weights_mut()[l][[r, c]] += H;
                let mut minus = mlp.clone();
                minus.weights_mut()[l][[r, c]] -= H;
                let numeric = (loss(&plus, &x)? - loss(&minus, &x)?) / (2.0 * H);
                worst = worst.max(gradient_error(grads.weights[l][[r, c]], numeric));
            }
            for i in 0..mlp.biases()[l].len() {
                let mut plus = mlp.clone();
                plus.biases_mut()[l][i] += H;
                let mut minus = mlp.clone();
                minus.biases_mut()[l][i] -= H;
                let numeric = (loss(&plus, &x)? - loss(&minus, &x)?) / (2.0 * H);
                worst = worst.max(gradient_error(grads.biases[l][i], numeric));
            }
        }
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += H;
            xm[i] -= H;
            let numeric = (loss(&mlp, &xp)? - loss(&mlp, &xm)?) / (2.0 * H);
            worst = worst.max(gradient_error(gx[i], numeric));
        }
        tally.trial(worst);
    }
    Ok(tally.finish())
}

/// Every suite with the sizes of `cfg`, each on its own seed stream.
pub fn run_all(cfg: &VerifyConfig) -> Result<Vec<SuiteReport>> {
    let s = |i: u64| cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);
    Ok(vec![
        verify_factorization(cfg.factorization_trials, s(1))?,
        verify_isomorphism(cfg.isomorphism_nets, s(2))?,
        verify_convexity(cfg.convexity_pairs, cfg.convexity_lambdas, s(3))?,
        verify_norm_inequalities(cfg.norm_trials, s(4))?,
        verify_tie_region(cfg.m0_samples, cfg.m0_constructed, s(5))?,
        verify_gradients(cfg.gradient_trials, s(6))?,
    ])
}
