use ndarray::{ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::matrix::{region_of, InducedMatrix, Region};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixDistances {
    /// Operator infinity-norm of `A - B`: largest absolute row sum.
    pub op_inf: f64,
    /// Entrywise L1 norm of `A - B`.
    pub vec1: f64,
}

pub fn norms(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<MatrixDistances> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let mut op_inf = 0.0f64;
    let mut vec1 = 0.0;
    for (ra, rb) in a.rows().into_iter().zip(b.rows()) {
        let row: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).sum();
        op_inf = op_inf.max(row);
        vec1 += row;
    }
    Ok(MatrixDistances { op_inf, vec1 })
}

/// `||u - v||_p` for `p` in `[1, inf]` (`f64::INFINITY` for the max norm).
pub fn logit_norms(u: ArrayView1<f64>, v: ArrayView1<f64>, p: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", u.len(), v.len())));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidConfig(format!("p = {p} is not a norm")));
    }
    let diffs = u.iter().zip(v).map(|(a, b)| (a - b).abs());
    Ok(if p.is_infinite() {
        diffs.fold(0.0, f64::max)
    } else if p == 1.0 {
        diffs.sum()
    } else {
        diffs.map(|d| d.powf(p)).sum::<f64>().powf(1.0 / p)
    })
}

/// Whether `lambda A + (1 - lambda) B` stays in the common class region of
/// `A` and `B`.
pub fn check_convexity(a: &InducedMatrix, b: &InducedMatrix, lambda: f64) -> Result<bool> {
    if a.region != b.region || a.region == Region::Tie {
        return Err(Error::RegionMismatch(a.region.to_string(), b.region.to_string()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(format!("lambda {lambda} outside [0, 1]")));
    }
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let mut mix = a.matrix.clone();
    Zip::from(&mut mix)
        .and(&b.matrix)
        .for_each(|m, &bv| *m = lambda * *m + (1.0 - lambda) * bv);
    Ok(region_of(mix.view()) == a.region)
}
