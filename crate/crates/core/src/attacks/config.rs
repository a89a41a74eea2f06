use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attack selection as written in a run config. Unset fields take the
/// method's defaults on [`AttackConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overshoot: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_start: Option<bool>,
    /// Overrides the suite seed for this attack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Fully resolved hyperparameters; recorded next to every adversarial set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    pub method: String,
    pub eps: f64,
    pub alpha: f64,
    pub steps: usize,
    pub decay: f64,
    pub overshoot: f64,
    pub random_start: bool,
    pub seed: Option<u64>,
}

/// Method keys in report order.
pub const METHODS: [&str; 8] = ["gn", "fgsm", "rfgsm", "ffgsm", "pgd", "pgd_l2", "mifgsm", "deepfool"];

/// Abbreviation used in report rows.
pub fn display_name(method: &str) -> Option<&'static str> {
    Some(match method.to_ascii_lowercase().as_str() {
        "gn" => "GN",
        "fgsm" => "FGSM",
        "rfgsm" => "RFGSM",
        "ffgsm" => "FFGSM",
        "pgd" => "PGD",
        "pgd_l2" | "pgdl2" => "PGDL2",
        "mifgsm" => "MIFGSM",
        "deepfool" => "DeepFool",
        _ => return None,
    })
}

/// torchattacks defaults for `method`.
pub fn default_params(method: &str) -> Option<AttackParams> {
    let method = method.to_ascii_lowercase();
    let base = AttackParams {
        method: method.clone(),
        eps: 8.0 / 255.0,
        alpha: 2.0 / 255.0,
        steps: 1,
        decay: 1.0,
        overshoot: 0.02,
        random_start: false,
        seed: None,
    };
    Some(match method.as_str() {
        "gn" => AttackParams { eps: 0.1, ..base },
        "fgsm" => base,
        "rfgsm" => base,
        "ffgsm" => AttackParams {
            alpha: 10.0 / 255.0,
            random_start: true,
            ..base
        },
        "pgd" => AttackParams {
            steps: 10,
            random_start: true,
            ..base
        },
        "pgd_l2" | "pgdl2" => AttackParams {
            method: "pgd_l2".into(),
            eps: 1.0,
            alpha: 0.2,
            steps: 10,
            random_start: true,
            ..base
        },
        "mifgsm" => AttackParams { steps: 10, ..base },
        "deepfool" => AttackParams { steps: 50, ..base },
        _ => return None,
    })
}

impl AttackConfig {
    pub fn new(method: &str) -> Self {
        Self {
            method: method.to_string(),
            eps: None,
            alpha: None,
            steps: None,
            decay: None,
            overshoot: None,
            random_start: None,
            seed: None,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = Some(steps);
        self
    }

    pub fn with_decay(mut self, decay: f64) -> Self {
        self.decay = Some(decay);
        self
    }

    pub fn with_overshoot(mut self, overshoot: f64) -> Self {
        self.overshoot = Some(overshoot);
        self
    }

    pub fn with_random_start(mut self, random_start: bool) -> Self {
        self.random_start = Some(random_start);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn resolve(&self) -> Result<AttackParams> {
        let d = default_params(&self.method).ok_or_else(|| Error::UnknownAttack(self.method.clone()))?;
        let p = AttackParams {
            eps: self.eps.unwrap_or(d.eps),
            alpha: self.alpha.unwrap_or(d.alpha),
            steps: self.steps.unwrap_or(d.steps),
            decay: self.decay.unwrap_or(d.decay),
            overshoot: self.overshoot.unwrap_or(d.overshoot),
            random_start: self.random_start.unwrap_or(d.random_start),
            seed: self.seed,
            method: d.method,
        };
        p.validate()?;
        Ok(p)
    }
}

impl AttackParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::InvalidConfig(format!("{}: {what} = {v}", self.method));
        for (what, v) in [("eps", self.eps), ("alpha", self.alpha), ("decay", self.decay), ("overshoot", self.overshoot)] {
            if !v.is_finite() || v < 0.0 {
                return Err(bad(what, v));
            }
        }
        let iterative = matches!(self.method.as_str(), "pgd" | "pgd_l2" | "mifgsm");
        if iterative && self.steps == 0 {
            return Err(Error::InvalidConfig(format!("{} needs steps >= 1", self.method)));
        }
        Ok(())
    }

    pub fn display_name(&self) -> &'static str {
        display_name(&self.method).unwrap_or("?")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let p = AttackConfig::new("PGD").resolve().unwrap();
        assert_eq!((p.eps, p.alpha, p.steps, p.random_start), (8.0 / 255.0, 2.0 / 255.0, 10, true));
        let p = AttackConfig::new("pgdl2").resolve().unwrap();
        assert_eq!((p.method.as_str(), p.eps, p.alpha), ("pgd_l2", 1.0, 0.2));
        let p = AttackConfig::new("deepfool").resolve().unwrap();
        assert_eq!((p.steps, p.overshoot), (50, 0.02));
        assert_eq!(AttackConfig::new("gn").resolve().unwrap().eps, 0.1);
        assert_eq!(AttackConfig::new("mifgsm").resolve().unwrap().decay, 1.0);
        for m in METHODS {
            assert!(AttackConfig::new(m).resolve().is_ok(), "{m}");
            assert!(display_name(m).is_some());
        }
    }

    #[test]
    fn overrides_and_errors() {
        let p = AttackConfig::new("fgsm").with_eps(0.3).with_seed(7).resolve().unwrap();
        assert_eq!((p.eps, p.seed), (0.3, Some(7)));
        assert!(matches!(AttackConfig::new("cw").resolve(), Err(Error::UnknownAttack(_))));
        assert!(AttackConfig::new("fgsm").with_eps(-1.0).resolve().is_err());
        assert!(AttackConfig::new("pgd").with_steps(0).resolve().is_err());
        assert!(AttackConfig::new("deepfool").with_steps(0).resolve().is_ok());
    }

    #[test]
    fn serde_omits_unset_fields() {
        let c = AttackConfig::new("fgsm").with_eps(0.1);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(text, r#"{"method":"fgsm","eps":0.1}"#);
        assert_eq!(serde_json::from_str::<AttackConfig>(&text).unwrap(), c);
    }
}
