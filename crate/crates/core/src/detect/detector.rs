use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::counts::{count_reliable_entries, EntryRule};
use super::stats::ClassStats;
use crate::error::{Error, Result};
use crate::quiver::{InducedMatrix, Region};

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

pub fn moments(values: &[usize]) -> Result<Moments> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptyCalibrationSet);
    }
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(Moments { mean, std })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub eps: f64,
    pub moments: Moments,
    /// Samples that entered the moments.
    pub used: usize,
    /// Samples dropped because their matrix lies in the tie region.
    pub dropped_ties: usize,
}

/// Moments of the reliable-entry counts of `matrices`, each taken against
/// the statistics of the class its matrix falls in (the predicted class).
pub fn calibrate(stats: &ClassStats, matrices: &[InducedMatrix], eps: f64, rule: EntryRule) -> Result<Calibration> {
    let mut counts = Vec::with_capacity(matrices.len());
    let mut dropped_ties = 0;
    for m in matrices {
        match m.region {
            Region::Class(j) => counts.push(count_reliable_entries(m.matrix.view(), stats.dev(j)?.view(), eps, rule)?),
            Region::Tie => dropped_ties += 1,
        }
    }
    Ok(Calibration {
        eps,
        moments: moments(&counts)?,
        used: counts.len(),
        dropped_ties,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Trust,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub decision: Decision,
    pub count: usize,
    pub threshold: f64,
    pub class: usize,
}

/// Thresholds and calibration moments of the decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub eps: f64,
    pub eps_prime: f64,
    pub t: f64,
    pub mu: f64,
    pub sigma: f64,
    #[serde(default)]
    pub rule: EntryRule,
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !(self.eps_prime > 0.0) {
            return Err(Error::InvalidConfig(format!("thresholds must be positive: {} {}", self.eps, self.eps_prime)));
        }
        if !(self.sigma >= 0.0) || !self.mu.is_finite() || !self.t.is_finite() {
            return Err(Error::InvalidConfig("calibration moments must be finite with sigma >= 0".into()));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.mu - self.t * self.sigma
    }

    /// Trust iff `count >= mu - t sigma`.
    #[inline]
    pub fn decide(&self, count: usize) -> Decision {
        if count as f64 >= self.threshold() {
            Decision::Trust
        } else {
            Decision::Reject
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedDetector {
    pub params: DetectorParams,
    pub stats: ClassStats,
}

impl CalibratedDetector {
    pub fn new(params: DetectorParams, stats: ClassStats) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, stats })
    }

    pub fn detect(&self, m: &InducedMatrix) -> Result<DetectionOutcome> {
        let j = m.region.class().ok_or(Error::UndefinedRegion)?;
        let count = count_reliable_entries(m.matrix.view(), self.stats.dev(j)?.view(), self.params.eps_prime, self.params.rule)?;
        Ok(DetectionOutcome {
            decision: self.params.decide(count),
            count,
            threshold: self.params.threshold(),
            class: j,
        })
    }

    /// Rejects matrices in the tie region, where no class statistics apply.
    pub fn trusts(&self, m: &InducedMatrix) -> Result<bool> {
        match self.detect(m) {
            Ok(o) => Ok(o.decision == Decision::Trust),
            Err(Error::UndefinedRegion) if m.region == Region::Tie => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// `<name>.detector.json` next to the class statistics archive `<name>.stats`.
    pub fn write(&self, dir: &Path, name: &str, run_id: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.stats.write(dir, &format!("{name}.stats"), run_id)?;
        fs::write(dir.join(format!("{name}.detector.json")), serde_json::to_string_pretty(&self.params)?)?;
        Ok(())
    }

    pub fn read(dir: &Path, name: &str) -> Result<Self> {
        let params: DetectorParams = serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.detector.json")))?)?;
        let stats = ClassStats::read(dir, &format!("{name}.stats"))?;
        Self::new(params, stats)
    }
}

/// Two-sided band rule of the out-of-distribution test.
pub fn ood_detect(mu: f64, sigma: f64, t: f64, count: usize) -> Decision {
    let n = count as f64;
    if mu - t * sigma <= n && n <= mu + t * sigma {
        Decision::Trust
    } else {
        Decision::Reject
    }
}
