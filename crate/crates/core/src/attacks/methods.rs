use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{AttackConfig, AttackParams};
use crate::error::{Error, Result};
use crate::nn::{argmax, Mlp};
use crate::registry::Registry;

/// Perturbation budget an attack promises to respect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Linf(f64),
    L2(f64),
    Unbounded,
}

/// An untargeted evasion attack on a batch of flattened `[0, 1]` inputs.
pub trait Attack: Send + Sync {
    fn params(&self) -> &AttackParams;

    fn name(&self) -> &'static str {
        self.params().display_name()
    }

    fn budget(&self) -> Budget;

    /// Adversarial versions of the rows of `x`, moving away from labels `y`.
    /// `rngs[i]` is the random stream of row `i`, so results do not depend on
    /// how samples are batched.
    fn perturb(&self, mlp: &Mlp<f32>, x: ArrayView2<f32>, y: &[usize], rngs: &mut [ChaCha8Rng]) -> Array2<f32>;
}

pub fn attack_registry() -> Registry<AttackConfig, dyn Attack> {
    let mut r: Registry<AttackConfig, dyn Attack> = Registry::new(Error::UnknownAttack);
    r.register("gn", |c| Ok(Box::new(GaussianNoise(c.resolve()?))));
    r.register("fgsm", |c| Ok(Box::new(Fgsm(c.resolve()?))));
    r.register("rfgsm", |c| Ok(Box::new(Rfgsm(c.resolve()?))));
    r.register("ffgsm", |c| Ok(Box::new(Ffgsm(c.resolve()?))));
    r.register("pgd", |c| Ok(Box::new(Pgd(c.resolve()?))));
    r.register("pgd_l2", |c| Ok(Box::new(PgdL2(c.resolve()?))));
    r.register("pgdl2", |c| Ok(Box::new(PgdL2(c.resolve()?))));
    r.register("mifgsm", |c| Ok(Box::new(Mifgsm(c.resolve()?))));
    r.register("deepfool", |c| Ok(Box::new(DeepFool(c.resolve()?))));
    r
}

pub fn build_attack(config: &AttackConfig) -> Result<Box<dyn Attack>> {
    attack_registry().build(&config.method, config)
}

#[inline]
fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn loss_gradient(mlp: &Mlp<f32>, x: &Array2<f32>, y: &[usize]) -> Array2<f32> {
    mlp.loss_input_gradient(x.view(), y).1
}

/// Clips `adv` to the L-infinity ball of radius `eps` around `x`, then to `[0, 1]`.
fn project_linf(adv: &mut Array2<f32>, x: ArrayView2<f32>, eps: f32) {
    Zip::from(adv)
        .and(x)
        .for_each(|a, &x| *a = a.max(x - eps).min(x + eps).clamp(0.0, 1.0));
}

fn sign_step(adv: &mut Array2<f32>, grad: &Array2<f32>, alpha: f32) {
    Zip::from(adv).and(grad).for_each(|a, &g| *a += alpha * sign(g));
}

fn uniform_start(x: ArrayView2<f32>, eps: f32, rngs: &mut [ChaCha8Rng]) -> Array2<f32> {
    let mut adv = x.to_owned();
    for (mut row, rng) in adv.rows_mut().into_iter().zip(rngs) {
        row.mapv_inplace(|v| (v + rng.random_range(-eps..=eps)).clamp(0.0, 1.0));
    }
    adv
}

fn row_norm(v: impl IntoIterator<Item = f32>) -> f64 {
    v.into_iter().map(|a| (a as f64) * (a as f64)).sum::<f64>().sqrt()
}

/// Shrinks `adv - x` per row onto the L2 ball of radius `eps`, then clips to `[0, 1]`.
fn project_l2(adv: &mut Array2<f32>, x: ArrayView2<f32>, eps: f64) {
    for (mut a, xr) in adv.rows_mut().into_iter().zip(x.rows()) {
        let n = row_norm(a.iter().zip(xr).map(|(a, x)| a - x));
        let factor = if n > eps { eps / n } else { 1.0 };
        Zip::from(&mut a).and(xr).for_each(|a, &x| {
            *a = (x as f64 + (*a - x) as f64 * factor).clamp(0.0, 1.0) as f32;
        });
    }
}

pub struct GaussianNoise(pub AttackParams);

impl Attack for GaussianNoise {
    fn params(&self) -> &AttackParams {
        &self.0
    }

    fn budget(&self) -> Budget {
        Budget::Unbounded
    }

    fn perturb(&self, _mlp: &Mlp<f32>, x: ArrayView2<f32>, _y: &[usize], rngs: &mut [ChaCha8Rng]) -> Array2<f32> {
        let std = self.0.eps as f32;
        let mut adv = x.to_owned();
        for (mut row, rng) in adv.rows_mut().into_iter().zip(rngs) {
            row.mapv_inplace(|v| {
                let z: f32 = rng.sample(StandardNormal);
                (v + std * z).clamp(0.0, 1.0)
            });
        }
        adv
    }
}

pub struct Fgsm(pub AttackParams);

impl Attack for Fgsm {
    fn params(&self) -> &AttackParams {
        &self.0
    }

    fn budget(&self) -> Budget {
        Budget::Linf(self.0.eps)
    }

    fn perturb(&self, mlp: &Mlp<f32>, x: ArrayView2<f32>, y: &[usize], _rngs: &mut [ChaCha8Rng]) -> Array2<f32> {
        let eps = self.0.eps as f32;
        let mut adv = x.to_owned();
        let g = loss_gradient(mlp, &adv, y);
        sign_step(&mut adv, &g, eps);
        project_linf(&mut adv, x, eps);
        adv
    }
}

/// FGSM from a random-sign start at half the budget; the gradient step uses the rest.
pub struct Rfgsm(pub AttackParams);

impl Attack for Rfgsm {
    fn params(&self) -> &AttackParams {
        &self.0
    }

    fn budget(&self) -> Budget {
        Budget::Linf(self.0.eps)
    }

    fn perturb(&self, mlp: &Mlp<f32>, x: ArrayView2<f32>, y: &[usize], rngs: &mut [ChaCha8Rng]) -> Array2<f32> {
        let eps = self.0.eps as f32;
        let half = eps / 2.0;
        let mut adv = x.to_owned();
        for (mut row, rng) in adv.rows_mut().into_iter().zip(rngs) {
            row.mapv_inplace(|v| {
                let z: f32 = rng.sample(StandardNormal);
                (v + half * sign(z)).clamp(0.0, 1.0)
            });
        }
        let g = loss_gradient(mlp, &adv, y);
        sign_step(&mut adv, &g, eps - half);
        project_linf(&mut adv, x, eps);
        adv
    }
}

/// Uniform start in the ball, one `alpha` sign step, projection.
pub struct Ffgsm(pub AttackParams);

impl Attack for Ffgsm {
    fn params(&self) -> &AttackParams {
        &self.0
    }

    fn budget(&self) -> Budget {
        Budget::Linf(self.0.eps)
    }

    fn perturb(&self, mlp: &Mlp<f32>, x: ArrayView2<f32>, y: &[usize], rngs: &mut [ChaCha8Rng]) -> Array2<f32> {
        let eps = self.0.eps as f32;
        let mut adv = if self.0.random_start {
            uniform_start(x, eps, rngs)
        } else {
            x.to_owned()
        };
        let g = loss_gradient(mlp, &adv, y);
        sign_step(&mut adv, &g, self.0.alpha as f32);
        project_linf(&mut adv, x, eps);
        adv
    }
}

pub struct Pgd(pub AttackParams);

impl Attack for Pgd {
    fn params(&self) -> &AttackParams {
        &self.0
    }

    fn budget(&self) -> Budget {
        Budget::Linf(self.0.eps)
    }

    fn perturb(&self, mlp: &Mlp<f32>, x: ArrayView2<f32>, y: &[usize], rngs: &mut [ChaCha8Rng]) -> Array2<f32> {
        let eps = self.0.eps as f32;
        let alpha = self.0.alpha as f32;
        let mut adv = if self.0.random_start {
            uniform_start(x, eps, rngs)
        } else {
            x.to_owned()
        };
        for _ in 0..self.0.steps {
            let g = loss_gradient(mlp, &adv, y);
            sign_step(&mut adv, &g, alpha);
            project_linf(&mut adv, x, eps);
        }
        adv
    }
}

pub struct PgdL2(pub AttackParams);

impl Attack for PgdL2 {
    fn params(&self) -> &AttackParams {
        &self.0
    }

    fn budget(&self) -> Budget {
        Budget::L2(self.0.eps)
    }

    fn perturb(&self, mlp: &Mlp<f32>, x: ArrayView2<f32>, y: &[usize], rngs: &mut [ChaCha8Rng]) -> Array2<f32> {
        let eps = self.0.eps;
        let alpha = self.0.alpha;
        let mut adv = x.to_owned();
        if self.0.random_start {
            // direction uniform on the sphere, radius uniform in [0, eps]
            for ((mut row, xr), rng) in adv.rows_mut().into_iter().zip(x.rows()).zip(rngs) {
                let z: Vec<f64> = (0..row.len()).map(|_| rng.sample(StandardNormal)).collect();
                let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                let r: f64 = rng.random::<f64>() * eps;
                let scale = if n > 0.0 { r / n } else { 0.0 };
                for ((a, &xv), zv) in row.iter_mut().zip(xr).zip(&z) {
                    *a = (xv as f64 + zv * scale).clamp(0.0, 1.0) as f32;
                }
            }
            project_l2(&mut adv, x, eps);
        }
        for _ in 0..self.0.steps {
            let g = loss_gradient(mlp, &adv, y);
            for (mut a, gr) in adv.rows_mut().into_iter().zip(g.rows()) {
                let step = alpha / (row_norm(gr.iter().copied()) + 1e-10);
                Zip::from(&mut a).and(gr).for_each(|a, &g| *a = (*a as f64 + g as f64 * step) as f32);
            }
            project_l2(&mut adv, x, eps);
        }
        adv
    }
}

/// Momentum iterative FGSM: gradients are L1-normalized per sample (mean
/// absolute value) before accumulation with `decay`.
pub struct Mifgsm(pub AttackParams);

impl Attack for Mifgsm {
    fn params(&self) -> &AttackParams {
        &self.0
    }

    fn budget(&self) -> Budget {
        Budget::Linf(self.0.eps)
    }

    fn perturb(&self, mlp: &Mlp<f32>, x: ArrayView2<f32>, y: &[usize], _rngs: &mut [ChaCha8Rng]) -> Array2<f32> {
        let eps = self.0.eps as f32;
        let alpha = self.0.alpha as f32;
        let decay = self.0.decay as f32;
        let mut adv = x.to_owned();
        let mut momentum = Array2::<f32>::zeros(x.raw_dim());
        for _ in 0..self.0.steps {
            let mut g = loss_gradient(mlp, &adv, y);
            for mut row in g.rows_mut() {
                let mean = row.iter().map(|v| v.abs() as f64).sum::<f64>() / row.len().max(1) as f64;
                if mean > 0.0 {
                    let inv = (1.0 / mean) as f32;
                    row.mapv_inplace(|v| v * inv);
                }
            }
            momentum *= decay;
            momentum += &g;
            sign_step(&mut adv, &momentum, alpha);
            project_linf(&mut adv, x, eps);
        }
        adv
    }
}

/// Iterated linearized minimal-norm step to the nearest class boundary,
/// each step scaled by `1 + overshoot`. Rows stop as soon as their
/// prediction leaves `y`; rows already off `y` are returned unchanged.
pub struct DeepFool(pub AttackParams);

impl Attack for DeepFool {
    fn params(&self) -> &AttackParams {
        &self.0
    }

    fn budget(&self) -> Budget {
        Budget::Unbounded
    }

    fn perturb(&self, mlp: &Mlp<f32>, x: ArrayView2<f32>, y: &[usize], _rngs: &mut [ChaCha8Rng]) -> Array2<f32> {
        let k = mlp.output_dim();
        let scale = 1.0 + self.0.overshoot;
        let mut adv = x.to_owned();
        let mut active: Vec<usize> = (0..x.nrows()).collect();
        for step in 0..=self.0.steps {
            if active.is_empty() {
                break;
            }
            let batch = adv.select(Axis(0), &active);
            let trace = mlp.forward_batch(batch.view(), None);
            let logits = trace.logits();
            let still: Vec<usize> = (0..active.len())
                .filter(|&r| argmax(logits.row(r).iter().map(|&v| v as f64)) == y[active[r]])
                .collect();
            if still.is_empty() || step == self.0.steps {
                break;
            }
            // Jacobian of the logits, one backward pass per class
            let jac: Vec<Array2<f32>> = (0..k)
                .map(|c| {
                    let mut dl = Array2::<f32>::zeros((active.len(), k));
                    dl.column_mut(c).fill(1.0);
                    mlp.input_gradient(&trace, dl)
                })
                .collect();
            for &r in &still {
                let i = active[r];
                let label = y[i];
                let mut best: Option<(f64, f64, usize)> = None;
                for c in (0..k).filter(|&c| c != label) {
                    let f = (logits[[r, c]] - logits[[r, label]]) as f64;
                    let wn2: f64 = jac[c]
                        .row(r)
                        .iter()
                        .zip(jac[label].row(r))
                        .map(|(a, b)| {
                            let w = (a - b) as f64;
                            w * w
                        })
                        .sum();
                    if wn2 == 0.0 {
                        continue;
                    }
                    let dist = f.abs() / wn2.sqrt();
                    if best.is_none_or(|(d, _, _)| dist < d) {
                        best = Some((dist, f.abs() / wn2, c));
                    }
                }
                let Some((_, coef, c)) = best else { continue };
                let coef = coef * scale;
                let (gc, gl) = (jac[c].row(r), jac[label].row(r));
                for ((a, &wc), &wl) in adv.row_mut(i).iter_mut().zip(gc).zip(gl) {
                    *a = (*a as f64 + coef * (wc - wl) as f64).clamp(0.0, 1.0) as f32;
                }
            }
            active = still.into_iter().map(|r| active[r]).collect();
        }
        adv
    }
}
