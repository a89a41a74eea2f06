use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::counts::{count_profile, EntryRule};
use super::detector::{moments, CalibratedDetector, Decision, DetectorParams, Moments};
use super::stats::ClassStats;
use crate::data_io::{AttackRow, DetectionReport, TestRow};
use crate::error::{Error, Result};
use crate::quiver::InducedMatrix;

/// `n` points spaced evenly in log10 between `10^lo` and `10^hi`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..n)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

fn sorted_union(parts: &[&[f64]]) -> Vec<f64> {
    let mut v: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Search space of `(eps, eps', t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub eps: Vec<f64>,
    pub eps_prime: Vec<f64>,
    pub t: Vec<f64>,
}

impl Default for Grid {
    /// Ten log-spaced points over `[1e-2, 1]` joined with ten over
    /// `[1e-5, 1]`, and the fixed `t` list.
    fn default() -> Self {
        let e = sorted_union(&[&logspace(-2.0, 0.0, 10), &logspace(-5.0, 0.0, 10)]);
        Self {
            eps: e.clone(),
            eps_prime: e,
            t: vec![1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.25, 0.5, 0.75, 1.0, 1.25],
        }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() || self.eps_prime.is_empty() || self.t.is_empty() {
            return Err(Error::InvalidConfig("empty parameter grid".into()));
        }
        if self.eps.iter().chain(&self.eps_prime).any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidConfig("thresholds must be finite and positive".into()));
        }
        if self.t.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidConfig("t values must be finite".into()));
        }
        Ok(())
    }

    /// Every threshold that needs a count, ascending.
    pub fn thresholds(&self) -> Vec<f64> {
        sorted_union(&[&self.eps, &self.eps_prime])
    }
}

/// Reliable-entry counts of one sample at every threshold of a grid;
/// `class` is `None` for matrices in the tie region (no counts).
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub class: Option<usize>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub thresholds: Vec<f64>,
    pub rule: EntryRule,
    pub samples: Vec<Profile>,
}

impl ProfileSet {
    pub fn new(thresholds: Vec<f64>, rule: EntryRule) -> Self {
        Self {
            thresholds,
            rule,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, stats: &ClassStats, m: &InducedMatrix) -> Result<()> {
        let profile = match m.region.class() {
            Some(j) => Profile {
                class: Some(j),
                counts: count_profile(m.matrix.view(), stats.dev(j)?.view(), &self.thresholds, self.rule)?,
            },
            None => Profile {
                class: None,
                counts: Vec::new(),
            },
        };
        self.samples.push(profile);
        Ok(())
    }

    pub fn from_matrices<'a>(
        stats: &ClassStats,
        matrices: impl IntoIterator<Item = &'a InducedMatrix>,
        thresholds: Vec<f64>,
        rule: EntryRule,
    ) -> Result<Self> {
        let mut set = Self::new(thresholds, rule);
        for m in matrices {
            set.push(stats, m)?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ties(&self) -> usize {
        self.samples.iter().filter(|p| p.class.is_none()).count()
    }

    pub fn index_of(&self, threshold: f64) -> Result<usize> {
        self.thresholds
            .iter()
            .position(|&g| g == threshold)
            .ok_or_else(|| Error::InvalidConfig(format!("threshold {threshold} was not profiled")))
    }

    /// Counts at threshold position `i`, tie samples left out.
    pub fn counts_at(&self, i: usize) -> Vec<usize> {
        self.samples.iter().filter(|p| p.class.is_some()).map(|p| p.counts[i]).collect()
    }

    /// Per-sample trust verdicts; tie samples are rejected.
    pub fn decisions(&self, params: &DetectorParams) -> Result<Vec<Decision>> {
        let i = self.index_of(params.eps_prime)?;
        Ok(self
            .samples
            .iter()
            .map(|p| match p.class {
                Some(_) => params.decide(p.counts[i]),
                None => Decision::Reject,
            })
            .collect())
    }
}

/// Rejection counts per threshold for a sample set, answered by binary search.
struct SortedCounts {
    by_threshold: Vec<Vec<usize>>,
    ties: usize,
    total: usize,
}

impl SortedCounts {
    fn new(set: &ProfileSet) -> Self {
        let by_threshold = (0..set.thresholds.len())
            .map(|i| {
                let mut c = set.counts_at(i);
                c.sort_unstable();
                c
            })
            .collect();
        Self {
            by_threshold,
            ties: set.ties(),
            total: set.len(),
        }
    }

    fn rejected(&self, i: usize, threshold: f64) -> usize {
        self.ties + self.by_threshold[i].partition_point(|&c| (c as f64) < threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub eps: f64,
    pub eps_prime: f64,
    pub t: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Mean over attacks of detected / total flipped samples.
    pub defence: f64,
    /// Rejected share of the clean test set.
    pub wrong_rejection: f64,
    pub difference: f64,
}

impl GridResult {
    pub fn params(&self, rule: EntryRule) -> DetectorParams {
        DetectorParams {
            eps: self.eps,
            eps_prime: self.eps_prime,
            t: self.t,
            mu: self.mu,
            sigma: self.sigma,
            rule,
        }
    }
}

/// Difference descending, then `(eps, eps', t)` ascending.
pub fn rank_order(a: &GridResult, b: &GridResult) -> Ordering {
    b.difference
        .total_cmp(&a.difference)
        .then(a.eps.total_cmp(&b.eps))
        .then(a.eps_prime.total_cmp(&b.eps_prime))
        .then(a.t.total_cmp(&b.t))
}

/// Scores every triple of `grid`. `calibration` supplies the count moments,
/// `attacks` hold only prediction-flipping adversarial samples, `test` the
/// clean test samples. Returns all triples in rank order.
pub fn grid_search(calibration: &ProfileSet, attacks: &[&ProfileSet], test: &ProfileSet, grid: &Grid) -> Result<Vec<GridResult>> {
    grid.validate()?;
    let sets = std::iter::once(calibration).chain(attacks.iter().copied()).chain(std::iter::once(test));
    for s in sets {
        if s.thresholds != calibration.thresholds || s.rule != calibration.rule {
            return Err(Error::InvalidConfig("profile sets use different thresholds".into()));
        }
    }
    let cal_moments: Vec<Moments> = grid
        .eps
        .iter()
        .map(|&e| moments(&calibration.counts_at(calibration.index_of(e)?)))
        .collect::<Result<_>>()?;
    let attack_counts: Vec<SortedCounts> = attacks.iter().map(|a| SortedCounts::new(a)).collect();
    let test_counts = SortedCounts::new(test);
    let eps_prime_idx: Vec<usize> = grid.eps_prime.iter().map(|&e| test.index_of(e)).collect::<Result<_>>()?;

    let mut results = Vec::with_capacity(grid.eps.len() * grid.eps_prime.len() * grid.t.len());
    for (&eps, m) in grid.eps.iter().zip(&cal_moments) {
        for (&eps_prime, &i) in grid.eps_prime.iter().zip(&eps_prime_idx) {
            for &t in &grid.t {
                let threshold = m.mean - t * m.std;
                let rates: Vec<f64> = attack_counts
                    .iter()
                    .filter(|a| a.total > 0)
                    .map(|a| a.rejected(i, threshold) as f64 / a.total as f64)
                    .collect();
                let defence = if rates.is_empty() {
                    0.0
                } else {
                    rates.iter().sum::<f64>() / rates.len() as f64
                };
                let wrong_rejection = if test_counts.total == 0 {
                    0.0
                } else {
                    test_counts.rejected(i, threshold) as f64 / test_counts.total as f64
                };
                results.push(GridResult {
                    eps,
                    eps_prime,
                    t,
                    mu: m.mean,
                    sigma: m.std,
                    defence,
                    wrong_rejection,
                    difference: defence - wrong_rejection,
                });
            }
        }
    }
    results.sort_by(rank_order);
    Ok(results)
}

pub fn grid_csv(results: &[GridResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["eps", "eps_prime", "t", "defence", "wrong_rejection", "difference"])?;
    for r in results {
        w.write_record([r.eps, r.eps_prime, r.t, r.defence, r.wrong_rejection, r.difference].map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn attack_row(name: &str, decisions: impl IntoIterator<Item = Decision>) -> AttackRow {
    let (mut detected, mut successful) = (0, 0);
    for d in decisions {
        match d {
            Decision::Reject => detected += 1,
            Decision::Trust => successful += 1,
        }
    }
    AttackRow {
        attack: name.to_string(),
        detected,
        successful,
        total: detected + successful,
    }
}

fn test_row(decisions: &[Decision], correct: &[bool]) -> TestRow {
    let total = decisions.len();
    let trusted = decisions.iter().filter(|&&d| d == Decision::Trust).count();
    let trusted_correct = decisions
        .iter()
        .zip(correct)
        .filter(|&(&d, &c)| d == Decision::Trust && c)
        .count();
    let all_correct = correct.iter().filter(|&&c| c).count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    TestRow {
        trusted,
        wrongly_rejected: total - trusted,
        total,
        accuracy_trusted: ratio(trusted_correct, trusted),
        accuracy_all: ratio(all_correct, total),
    }
}

/// Report from precomputed profiles. `correct[i]` says whether test sample
/// `i` was classified correctly.
pub fn evaluate_profiles(
    params: &DetectorParams,
    attacks: &[(&str, &ProfileSet)],
    test: &ProfileSet,
    correct: &[bool],
) -> Result<DetectionReport> {
    if correct.len() != test.len() {
        return Err(Error::ShapeMismatch(format!("{} correctness flags for {} samples", correct.len(), test.len())));
    }
    let mut rows = Vec::with_capacity(attacks.len());
    for (name, set) in attacks {
        rows.push(attack_row(name, set.decisions(params)?));
    }
    Ok(DetectionReport {
        attacks: rows,
        test: test_row(&test.decisions(params)?, correct),
    })
}

/// Report from matrices: `attacks` pair a name with the matrices of its
/// flipped samples.
pub fn evaluate_detection(
    detector: &CalibratedDetector,
    attacks: &[(&str, &[InducedMatrix])],
    test: &[InducedMatrix],
    correct: &[bool],
) -> Result<DetectionReport> {
    if correct.len() != test.len() {
        return Err(Error::ShapeMismatch(format!("{} correctness flags for {} samples", correct.len(), test.len())));
    }
    let verdict = |m: &InducedMatrix| -> Result<Decision> {
        Ok(if detector.trusts(m)? {
            Decision::Trust
        } else {
            Decision::Reject
        })
    };
    let mut rows = Vec::with_capacity(attacks.len());
    for (name, ms) in attacks {
        rows.push(attack_row(name, ms.iter().map(verdict).collect::<Result<Vec<_>>>()?));
    }
    let decisions = test.iter().map(verdict).collect::<Result<Vec<_>>>()?;
    Ok(DetectionReport {
        attacks: rows,
        test: test_row(&decisions, correct),
    })
}
