use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use super::real::Real;
use crate::error::{Error, Result};
use crate::registry::Registry;

/// Optimizer selection, resolved by name through [`optimizer_registry`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub name: String,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            momentum: default_momentum(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn sgd() -> Self {
        Self::named("sgd")
    }

    pub fn momentum() -> Self {
        Self::named("momentum")
    }

    pub fn adam() -> Self {
        Self::named("adam")
    }
}

pub trait Optimizer<F: Real>: Send {
    fn name(&self) -> &'static str;
    /// Applies one update with learning rate `lr`.
    fn step(&mut self, mlp: &mut Mlp<F>, grads: &Gradients<F>, lr: f64);
}

pub fn optimizer_registry<F: Real>() -> Registry<OptimizerConfig, dyn Optimizer<F>> {
    let mut r: Registry<OptimizerConfig, dyn Optimizer<F>> = Registry::new(Error::UnknownOptimizer);
    r.register("sgd", |_| Ok(Box::new(Sgd)));
    r.register("momentum", |c| {
        if !(0.0..1.0).contains(&c.momentum) {
            return Err(Error::InvalidConfig(format!("momentum {} outside [0, 1)", c.momentum)));
        }
        Ok(Box::new(Momentum {
            momentum: c.momentum,
            velocity: None,
        }))
    });
    r.register("adam", |c| {
        if !(0.0..1.0).contains(&c.beta1) || !(0.0..1.0).contains(&c.beta2) || c.eps <= 0.0 {
            return Err(Error::InvalidConfig("adam needs betas in [0, 1) and eps > 0".into()));
        }
        Ok(Box::new(Adam {
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.eps,
            t: 0,
            moments: None,
        }))
    });
    r
}

pub fn build_optimizer<F: Real>(config: &OptimizerConfig) -> Result<Box<dyn Optimizer<F>>> {
    optimizer_registry::<F>().build(&config.name, config)
}

struct Sgd;

impl<F: Real> Optimizer<F> for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn step(&mut self, mlp: &mut Mlp<F>, grads: &Gradients<F>, lr: f64) {
        let lr = F::of(lr);
        for (w, g) in mlp.weights_mut().iter_mut().zip(&grads.weights) {
            w.scaled_add(-lr, g);
        }
        for (b, g) in mlp.biases_mut().iter_mut().zip(&grads.biases) {
            b.scaled_add(-lr, g);
        }
    }
}

/// Heavy-ball momentum: `v = mu * v + g; p -= lr * v`.
struct Momentum<F: Real> {
    momentum: f64,
    velocity: Option<Gradients<F>>,
}

impl<F: Real> Optimizer<F> for Momentum<F> {
    fn name(&self) -> &'static str {
        "momentum"
    }

    fn step(&mut self, mlp: &mut Mlp<F>, grads: &Gradients<F>, lr: f64) {
        let mu = F::of(self.momentum);
        let lr = F::of(lr);
        let v = self.velocity.get_or_insert_with(|| Gradients::zeros_like(mlp));
        for ((w, vw), g) in mlp.weights_mut().iter_mut().zip(&mut v.weights).zip(&grads.weights) {
            Zip::from(w).and(vw).and(g).for_each(|p, v, &g| {
                *v = mu * *v + g;
                *p -= lr * *v;
            });
        }
        for ((b, vb), g) in mlp.biases_mut().iter_mut().zip(&mut v.biases).zip(&grads.biases) {
            Zip::from(b).and(vb).and(g).for_each(|p, v, &g| {
                *v = mu * *v + g;
                *p -= lr * *v;
            });
        }
    }
}

/// Adam with bias correction.
struct Adam<F: Real> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    moments: Option<(Gradients<F>, Gradients<F>)>,
}

impl<F: Real> Optimizer<F> for Adam<F> {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, mlp: &mut Mlp<F>, grads: &Gradients<F>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let (one_b1, one_b2) = (F::of(1.0 - self.beta1), F::of(1.0 - self.beta2));
        let c1 = F::of(1.0 / (1.0 - self.beta1.powi(self.t)));
        let c2 = F::of(1.0 / (1.0 - self.beta2.powi(self.t)));
        let (lr, eps) = (F::of(lr), F::of(self.eps));
        let (m, v) = self
            .moments
            .get_or_insert_with(|| (Gradients::zeros_like(mlp), Gradients::zeros_like(mlp)));
        let update = |p: &mut F, m: &mut F, v: &mut F, g: F| {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *p -= lr * (*m * c1) / ((*v * c2).sqrt() + eps);
        };
        for (((w, mw), vw), g) in mlp
            .weights_mut()
            .iter_mut()
            .zip(&mut m.weights)
            .zip(&mut v.weights)
            .zip(&grads.weights)
        {
            Zip::from(w).and(mw).and(vw).and(g).for_each(|p, m, v, &g| update(p, m, v, g));
        }
        for (((b, mb), vb), g) in mlp
            .biases_mut()
            .iter_mut()
            .zip(&mut m.biases)
            .zip(&mut v.biases)
            .zip(&grads.biases)
        {
            Zip::from(b).and(mb).and(vb).and(g).for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpSpec;
    use ndarray::{arr1, arr2};

    fn one_param() -> Mlp<f64> {
        Mlp::from_parts(MlpSpec::new(1, vec![], 1), vec![arr2(&[[1.0]])], vec![arr1(&[0.0])]).unwrap()
    }

    fn grad(g: f64) -> Gradients<f64> {
        Gradients {
            weights: vec![arr2(&[[g]])],
            biases: vec![arr1(&[0.0])],
        }
    }

    #[test]
    fn registry_names() {
        let r = optimizer_registry::<f32>();
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["adam", "momentum", "sgd"]);
        assert!(matches!(build_optimizer::<f32>(&OptimizerConfig::named("lbfgs")), Err(Error::UnknownOptimizer(_))));
    }

    #[test]
    fn sgd_step() {
        let mut m = one_param();
        build_optimizer(&OptimizerConfig::sgd()).unwrap().step(&mut m, &grad(2.0), 0.1);
        assert!((m.weights()[0][[0, 0]] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let mut m = one_param();
        let mut opt = build_optimizer(&OptimizerConfig::momentum()).unwrap();
        opt.step(&mut m, &grad(1.0), 0.1); // v = 1
        opt.step(&mut m, &grad(1.0), 0.1); // v = 1.9
        assert!((m.weights()[0][[0, 0]] - (1.0 - 0.1 - 0.19)).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let mut m = one_param();
        let mut opt = build_optimizer(&OptimizerConfig::adam()).unwrap();
        opt.step(&mut m, &grad(-3.0), 0.01);
        assert!((m.weights()[0][[0, 0]] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        for name in ["sgd", "momentum", "adam"] {
            let mut m = one_param();
            let mut opt = build_optimizer(&OptimizerConfig::named(name)).unwrap();
            opt.step(&mut m, &grad(5.0), 0.0);
            assert_eq!(m, one_param(), "{name}");
        }
    }
}
