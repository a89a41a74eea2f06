use ndarray::{ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How matrix entries are compared with the threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryRule {
    /// `M > eps` on the raw value.
    #[default]
    Signed,
    /// `|M| > eps`.
    AbsEntries,
}

impl EntryRule {
    #[inline]
    pub fn value(self, m: f64) -> f64 {
        match self {
            EntryRule::Signed => m,
            EntryRule::AbsEntries => m.abs(),
        }
    }
}

fn same_shape(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())))
    }
}

/// Number of entries with `S <= eps` and `M > eps`.
pub fn count_reliable_entries(m: ArrayView2<f64>, dev: ArrayView2<f64>, eps: f64, rule: EntryRule) -> Result<usize> {
    same_shape(m, dev)?;
    let mut n = 0;
    Zip::from(m).and(dev).for_each(|&m, &s| {
        n += (s <= eps && rule.value(m) > eps) as usize;
    });
    Ok(n)
}

/// Reliable-entry counts for every value of an ascending threshold grid at
/// once. An entry counts for `eps` exactly when `S <= eps < M`, so it adds
/// one to a contiguous run of grid positions.
pub fn count_profile(m: ArrayView2<f64>, dev: ArrayView2<f64>, grid: &[f64], rule: EntryRule) -> Result<Vec<usize>> {
    same_shape(m, dev)?;
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidConfig("threshold grid must be strictly increasing".into()));
    }
    let mut diff = vec![0i64; grid.len() + 1];
    Zip::from(m).and(dev).for_each(|&m, &s| {
        let lo = grid.partition_point(|&g| g < s);
        let hi = grid.partition_point(|&g| g < rule.value(m));
        if lo < hi {
            diff[lo] += 1;
            diff[hi] -= 1;
        }
    });
    let mut out = Vec::with_capacity(grid.len());
    let mut run = 0i64;
    for d in &diff[..grid.len()] {
        run += d;
        out.push(run as usize);
    }
    Ok(out)
}

/// Number of entries inside the band `mean - delta S <= M <= mean + delta S`.
pub fn ood_count(m: ArrayView2<f64>, mean: ArrayView2<f64>, dev: ArrayView2<f64>, delta: f64) -> Result<usize> {
    same_shape(m, mean)?;
    same_shape(m, dev)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig(format!("delta {delta} must be positive")));
    }
    let mut n = 0;
    Zip::from(m).and(mean).and(dev).for_each(|&m, &mu, &s| {
        // delta * 0 would be NaN for an infinite delta
        let w = if s == 0.0 { 0.0 } else { delta * s };
        n += (mu - w <= m && m <= mu + w) as usize;
    });
    Ok(n)
}
