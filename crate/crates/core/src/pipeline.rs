//! End-to-end detection run on a trained model: class statistics from
//! training matrices, calibration counts, attacks, grid search and the
//! final report.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{run_attack_suite, AdversarialSet, AttackConfig};
use crate::data_io::{sample_per_class, sample_uniform, Dataset, DetectionReport};
use crate::detect::{
    class_moments, evaluate_profiles, grid_search, CalibratedDetector, ClassStats, EntryRule, Grid, GridResult, ProfileSet,
    StatsOptions,
};
use crate::error::Result;
use crate::nn::Mlp;
use crate::quiver::{induced_matrix, InducedMatrix, RatioPolicy, Region};

/// Rows handed to one worker at a time.
const MATRIX_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Training samples drawn per class for the statistics.
    pub stats_per_class: usize,
    pub stats_seed: u64,
    /// Uniform training samples used to calibrate the count moments.
    pub calibration_size: usize,
    pub calibration_seed: u64,
    pub attack_seed: u64,
    pub attacks: Vec<AttackConfig>,
    pub grid: Grid,
    pub rule: EntryRule,
    pub stats_options: StatsOptions,
    pub policy: RatioPolicy,
    /// Triples reported from the ranked grid.
    pub top: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stats_per_class: 1000,
            stats_seed: 1,
            calibration_size: 10_000,
            calibration_seed: 2,
            attack_seed: 3,
            attacks: ["fgsm", "rfgsm", "ffgsm", "pgd", "pgd_l2", "mifgsm"]
                .into_iter()
                .map(AttackConfig::new)
                .collect(),
            grid: Grid::default(),
            rule: EntryRule::default(),
            stats_options: StatsOptions::default(),
            policy: RatioPolicy::default(),
            top: 3,
        }
    }
}

/// Induced matrices of the rows of `x`, computed in parallel.
pub fn induced_matrices(mlp: &Mlp<f64>, x: ArrayView2<f32>, policy: &RatioPolicy) -> Result<Vec<InducedMatrix>> {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let chunks: Vec<Vec<InducedMatrix>> = rows
        .par_chunks(MATRIX_CHUNK)
        .map(|c| {
            c.iter()
                .map(|&i| induced_matrix(mlp, x.row(i).mapv(f64::from).view(), policy))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Count profiles of the rows of `x` without keeping their matrices.
pub fn profile_rows(
    mlp: &Mlp<f64>,
    stats: &ClassStats,
    x: ArrayView2<f32>,
    thresholds: &[f64],
    rule: EntryRule,
    policy: &RatioPolicy,
) -> Result<ProfileSet> {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let parts: Vec<ProfileSet> = rows
        .par_chunks(MATRIX_CHUNK)
        .map(|c| {
            let mut set = ProfileSet::new(thresholds.to_vec(), rule);
            for &i in c {
                let m = induced_matrix(mlp, x.row(i).mapv(f64::from).view(), policy)?;
                set.push(stats, &m)?;
            }
            Ok(set)
        })
        .collect::<Result<_>>()?;
    let mut out = ProfileSet::new(thresholds.to_vec(), rule);
    for p in parts {
        out.samples.extend(p.samples);
    }
    Ok(out)
}

/// Per-class statistics over `per_class` training samples of each class,
/// keeping only those the model classifies correctly. Returns the stats and
/// how many kept matrices fell outside their class region.
pub fn build_class_stats(
    mlp: &Mlp<f32>,
    train: &Dataset,
    per_class: usize,
    seed: u64,
    options: StatsOptions,
    policy: &RatioPolicy,
) -> Result<(ClassStats, usize)> {
    let wide = mlp.cast::<f64>();
    let sample = sample_per_class(train, per_class, seed)?;
    let mut stats = ClassStats::empty(options);
    let mut mismatches = 0;
    // one class at a time keeps only its matrices in memory
    for (j, group) in sample.groups.iter().enumerate() {
        let x = train.gather(group);
        let preds = mlp.predict_batch(x.view());
        let keep: Vec<usize> = (0..group.len()).filter(|&i| preds[i] == j).collect();
        let matrices = induced_matrices(&wide, x.select(Axis(0), &keep).view(), policy)?;
        mismatches += matrices.iter().filter(|m| m.region != Region::Class(j)).count();
        let views: Vec<ArrayView2<f64>> = matrices.iter().map(|m| m.matrix.view()).collect();
        let (mean, dev) = class_moments(&views, j, options)?;
        stats.push(mean, dev, views.len())?;
    }
    Ok((stats, mismatches))
}

#[derive(Debug, Clone)]
pub struct Calibrated {
    pub detector: CalibratedDetector,
    /// Statistics samples whose matrix region disagreed with their label.
    pub region_mismatches: usize,
    pub calibration_ties: usize,
    /// Every grid triple, best first.
    pub ranked: Vec<GridResult>,
    pub report: DetectionReport,
}

impl Calibrated {
    /// The `n` best triples.
    pub fn top(&self, n: usize) -> &[GridResult] {
        &self.ranked[..n.min(self.ranked.len())]
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub adversarial: Vec<AdversarialSet>,
    pub calibrated: Calibrated,
}

fn flipped_inputs(a: &AdversarialSet) -> Array2<f32> {
    a.inputs.select(Axis(0), &a.flipped_rows())
}

fn correctness(mlp: &Mlp<f32>, test: &Dataset) -> Vec<bool> {
    let preds = mlp.predict_batch(test.images().view());
    preds.iter().zip(test.labels()).map(|(p, l)| p == l).collect()
}

/// Class statistics, calibration and grid search against precomputed
/// adversarial sets. The detector uses the best triple.
pub fn calibrate_detector(
    mlp: &Mlp<f32>,
    train: &Dataset,
    test: &Dataset,
    adversarial: &[AdversarialSet],
    cfg: &PipelineConfig,
) -> Result<Calibrated> {
    cfg.grid.validate()?;
    let wide = mlp.cast::<f64>();
    let (stats, region_mismatches) = build_class_stats(mlp, train, cfg.stats_per_class, cfg.stats_seed, cfg.stats_options, &cfg.policy)?;
    // detection uses what a stored detector would see
    let stats = stats.quantized();
    let thresholds = cfg.grid.thresholds();
    let profile = |x: ArrayView2<f32>| profile_rows(&wide, &stats, x, &thresholds, cfg.rule, &cfg.policy);

    let cal_idx = sample_uniform(train, cfg.calibration_size, cfg.calibration_seed)?.indices();
    let calibration = profile(train.gather(&cal_idx).view())?;
    let attack_sets = adversarial.iter().map(|a| profile(flipped_inputs(a).view())).collect::<Result<Vec<_>>>()?;
    let test_set = profile(test.images().view())?;

    let attack_refs: Vec<&ProfileSet> = attack_sets.iter().collect();
    let ranked = grid_search(&calibration, &attack_refs, &test_set, &cfg.grid)?;
    let best = ranked[0].params(cfg.rule);
    let named: Vec<(&str, &ProfileSet)> = adversarial.iter().map(|a| a.name()).zip(attack_sets.iter()).collect();
    let report = evaluate_profiles(&best, &named, &test_set, &correctness(mlp, test))?;

    Ok(Calibrated {
        detector: CalibratedDetector::new(best, stats)?,
        region_mismatches,
        calibration_ties: calibration.ties(),
        ranked,
        report,
    })
}

/// Scores a stored detector on the flipped samples of each adversarial set
/// and on the clean test set.
pub fn detection_report(
    mlp: &Mlp<f32>,
    detector: &CalibratedDetector,
    adversarial: &[AdversarialSet],
    test: &Dataset,
    policy: &RatioPolicy,
) -> Result<DetectionReport> {
    let wide = mlp.cast::<f64>();
    let p = &detector.params;
    let profile = |x: ArrayView2<f32>| profile_rows(&wide, &detector.stats, x, &[p.eps_prime], p.rule, policy);
    let sets = adversarial.iter().map(|a| profile(flipped_inputs(a).view())).collect::<Result<Vec<_>>>()?;
    let named: Vec<(&str, &ProfileSet)> = adversarial.iter().map(|a| a.name()).zip(sets.iter()).collect();
    evaluate_profiles(p, &named, &profile(test.images().view())?, &correctness(mlp, test))
}

/// Attacks the test set, then calibrates against the results.
pub fn run_pipeline(mlp: &Mlp<f32>, train: &Dataset, test: &Dataset, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let adversarial = run_attack_suite(mlp, test, &cfg.attacks, cfg.attack_seed)?;
    let calibrated = calibrate_detector(mlp, train, test, &adversarial, cfg)?;
    Ok(PipelineOutput { adversarial, calibrated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{gaussian_blobs, Split};
    use crate::nn::{train as fit, MlpSpec, OptimizerConfig, TrainConfig};

    #[test]
    fn blob_pipeline_runs() {
        let tr = gaussian_blobs(600, 12, 3, 0.05, 5, Split::Train).unwrap();
        let te = gaussian_blobs(150, 12, 3, 0.05, 5, Split::Test).unwrap();
        let mlp = Mlp::<f32>::init(&MlpSpec::new(12, vec![16, 16], 3).with_seed(1)).unwrap();
        let (mlp, _) = fit(mlp, &tr, None, &TrainConfig::new(OptimizerConfig::adam(), 1e-2, 32, 10)).unwrap();
        let cfg = PipelineConfig {
            stats_per_class: 50,
            calibration_size: 200,
            ..Default::default()
        };
        let out = run_pipeline(&mlp, &tr, &te, &cfg).unwrap();
        let c = &out.calibrated;
        assert_eq!(c.region_mismatches, 0);
        assert_eq!(c.ranked.len(), 18 * 18 * 10);
        assert_eq!(c.top(cfg.top).len(), 3);
        assert_eq!(c.report.attacks.len(), 6);
        assert_eq!(c.report.test.total, 150);
        c.report.validate().unwrap();
        assert!(c.ranked.windows(2).all(|w| w[0].difference >= w[1].difference));

        let again = detection_report(&mlp, &c.detector, &out.adversarial, &te, &cfg.policy).unwrap();
        assert_eq!(again, c.report);
    }

    #[test]
    fn parallel_matrices_match_serial() {
        let mlp = Mlp::<f64>::init(&MlpSpec::new(5, vec![7], 3).with_seed(2)).unwrap();
        let x = Array2::from_shape_fn((150, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f32 / 11.0);
        let par = induced_matrices(&mlp, x.view(), &RatioPolicy::default()).unwrap();
        for (i, m) in par.iter().enumerate() {
            let row = x.row(i).mapv(f64::from);
            let s = induced_matrix(&mlp, row.view(), &RatioPolicy::default()).unwrap();
            assert_eq!(m.matrix, s.matrix);
        }
    }
}
