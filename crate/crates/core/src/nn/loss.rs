use ndarray::{Array2, ArrayView2};

use super::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Loss summed over the batch; per-sample gradients are exact.
    Sum,
    /// Loss averaged over the batch (training).
    Mean,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v || i == 0 {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Softmax cross-entropy over rows of `logits`. Returns the reduced loss and
/// its gradient w.r.t. the logits. Computed in `f64` per row.
pub fn softmax_cross_entropy<F: Real>(logits: ArrayView2<F>, labels: &[usize], reduction: Reduction) -> (f64, Array2<F>) {
    assert_eq!(logits.nrows(), labels.len(), "one label per row");
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / labels.len().max(1) as f64,
    };
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((row, mut g), &label) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        total += z.ln() + max - row[label].as_f64();
        for (c, (gc, e)) in g.iter_mut().zip(&exps).enumerate() {
            let p = e / z;
            let target = if c == label { 1.0 } else { 0.0 };
            *gc = F::of((p - target) * scale);
        }
    }
    (total * scale, grad)
}
