use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{Dataset, Split};
use crate::error::{Error, Result};

/// Gaussian class clusters in `[0, 1]^d`: `k` centres drawn uniformly from
/// `[0.2, 0.8]^d`, samples are centre plus `N(0, noise^2)` noise, clipped.
/// Labels cycle through the classes. Meant for tests and smoke runs without
/// the real datasets.
pub fn gaussian_blobs(n: usize, d: usize, k: usize, noise: f64, seed: u64, split: Split) -> Result<Dataset> {
    if k == 0 || d == 0 {
        return Err(Error::InvalidConfig("blobs need d >= 1 and k >= 1".into()));
    }
    let normal = Normal::new(0.0, noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    // centres depend on the seed only, so train and test splits share them
    let mut crng = ChaCha8Rng::seed_from_u64(seed);
    let centres = Array2::from_shape_simple_fn((k, d), || crng.random_range(0.2..0.8));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match split {
        Split::Train => 1,
        Split::Test => 2,
    });
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut images = Array2::<f32>::zeros((n, d));
    for (mut row, &c) in images.rows_mut().into_iter().zip(&labels) {
        for (v, &m) in row.iter_mut().zip(centres.row(c)) {
            *v = (m + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
    }
    Dataset::new(images, labels, k, split)
}
