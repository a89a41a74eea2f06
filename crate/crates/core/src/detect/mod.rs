//! Per-class statistics of induced matrices and the count-based detector
//! built on them.
//!
//! A sample predicted as class `j` is scored by how many entries of its
//! matrix are both stable across class `j` (`S^j <= eps`) and large
//! (`M > eps`). The detector trusts the sample when this count is at least
//! `mu - t sigma`, with `mu`, `sigma` taken from a calibration set.

mod counts;
mod detector;
mod grid;
mod stats;

pub use counts::{count_profile, count_reliable_entries, ood_count, EntryRule};
pub use detector::{
    calibrate, moments, ood_detect, CalibratedDetector, Calibration, Decision, DetectionOutcome, DetectorParams, Moments,
};
pub use grid::{
    evaluate_detection, evaluate_profiles, grid_csv, grid_search, logspace, rank_order, Grid, GridResult, Profile,
    ProfileSet,
};
pub use stats::{class_moments, class_stats, ClassStats, StatsOptions};
