use std::fmt;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::knowledge::{knowledge_map, LayerContribution, RatioPolicy};
use crate::error::{Error, Result};
use crate::nn::{ForwardTrace, Mlp, Real};

/// Which class region of matrix space a matrix lies in. `Tie` is the
/// measure-zero set where the largest row sum is not unique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Class(usize),
    Tie,
}

impl Region {
    pub fn class(self) -> Option<usize> {
        match self {
            Region::Class(c) => Some(c),
            Region::Tie => None,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Class(c) => write!(f, "class {c}"),
            Region::Tie => f.write_str("M0"),
        }
    }
}

/// Row sums `M 1`.
pub fn row_sums(m: ArrayView2<f64>) -> Array1<f64> {
    m.sum_axis(Axis(1))
}

/// Region of a score vector: the strict argmax, or `Tie`.
pub fn region_of_scores(scores: ArrayView1<f64>) -> Region {
    let mut best = None;
    let mut best_v = f64::NEG_INFINITY;
    let mut tied = false;
    for (i, &v) in scores.iter().enumerate() {
        if v > best_v || best.is_none() {
            best = Some(i);
            best_v = v;
            tied = false;
        } else if v == best_v {
            tied = true;
        }
    }
    match best {
        Some(c) if !tied => Region::Class(c),
        _ => Region::Tie,
    }
}

/// Class region of a matrix, decided by its row sums.
pub fn region_of(m: ArrayView2<f64>) -> Region {
    region_of_scores(row_sums(m).view())
}

/// The contracted `rows x (cols + 1)` matrix: data-dependent input columns
/// followed by one accumulated bias column, so `M 1` reproduces the output
/// of the (sub)network.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedMatrix {
    pub matrix: Array2<f64>,
    pub region: Region,
    /// Neurons whose ratio came from the near-zero branch of the policy.
    pub near_zero: usize,
}

impl InducedMatrix {
    pub fn new(matrix: Array2<f64>, near_zero: usize) -> Self {
        let region = region_of(matrix.view());
        Self {
            matrix,
            region,
            near_zero,
        }
    }

    /// `M 1`, equal to the logits for a full-network matrix.
    pub fn evaluate(&self) -> Array1<f64> {
        row_sums(self.matrix.view())
    }

    pub fn input_block(&self) -> ArrayView2<'_, f64> {
        self.matrix.slice(s![.., ..self.matrix.ncols() - 1])
    }

    pub fn bias_column(&self) -> ArrayView1<'_, f64> {
        self.matrix.column(self.matrix.ncols() - 1)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.dim()
    }

    pub fn to_f32(&self) -> Array2<f32> {
        self.matrix.mapv(|v| v as f32)
    }
}

fn with_bias_column(block: Array2<f64>, bias: Array1<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[block.view(), bias.insert_axis(Axis(1)).view()]).expect("row counts agree")
}

/// Composes the per-layer affine maps into one matrix. The product
/// `B_L ... B_1` is formed from the output side, so every intermediate has
/// as many rows as the output layer.
pub fn contract(contribs: &[LayerContribution]) -> Result<InducedMatrix> {
    let last = contribs
        .last()
        .ok_or_else(|| Error::ShapeMismatch("no layers to contract".into()))?;
    for pair in contribs.windows(2) {
        let (lower, upper) = (&pair[0], &pair[1]);
        if upper.block.ncols() != lower.block.nrows() || lower.bias.len() != lower.block.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "layer {} ({:?}) does not chain into layer {} ({:?})",
                lower.layer,
                lower.block.dim(),
                upper.layer,
                upper.block.dim()
            )));
        }
    }
    if last.bias.len() != last.block.nrows() {
        return Err(Error::ShapeMismatch("bias length differs from block rows".into()));
    }
    let mut prefix = last.block.clone();
    let mut bias = last.bias.clone();
    for c in contribs[..contribs.len() - 1].iter().rev() {
        bias += &prefix.dot(&c.bias);
        prefix = prefix.dot(&c.block);
    }
    Ok(InducedMatrix::new(with_bias_column(prefix, bias), 0))
}

/// Contracted matrix of layers `first..=last` of `mlp` on the activations
/// recorded in `trace`, without materializing the per-layer blocks.
pub fn induced_matrix_range<F: Real>(
    mlp: &Mlp<F>,
    trace: &ForwardTrace,
    first: usize,
    last: usize,
    policy: &RatioPolicy,
) -> Result<InducedMatrix> {
    if first > last || last >= mlp.layers() {
        return Err(Error::BadLayerRange {
            start: first,
            end: last,
            layers: mlp.layers(),
        });
    }
    mlp.check_trace(trace)?;
    let mut near_zero = 0;
    let mut prefix = F::matrix_f64(&mlp.weights()[last]).into_owned();
    let mut bias = F::vector_f64(&mlp.biases()[last]).into_owned();
    for l in (first..last).rev() {
        let (r, hits) = policy.layer_ratios(mlp.activation(), trace, l);
        near_zero += hits;
        prefix *= &r.view().insert_axis(Axis(0));
        bias += &prefix.dot(&*F::vector_f64(&mlp.biases()[l]));
        prefix = prefix.dot(&*F::matrix_f64(&mlp.weights()[l]));
    }
    prefix *= &trace.layer_input(first).view().insert_axis(Axis(0));
    // for a hidden `last` the region is the strictly largest pre-activation, not a class
    Ok(InducedMatrix::new(with_bias_column(prefix, bias), near_zero))
}

/// `M(W, f)(x)` for an input `x`.
pub fn induced_matrix<F: Real>(mlp: &Mlp<F>, x: ArrayView1<f64>, policy: &RatioPolicy) -> Result<InducedMatrix> {
    let trace = mlp.forward(x)?;
    induced_matrix_from_trace(mlp, &trace, policy)
}

pub fn induced_matrix_from_trace<F: Real>(mlp: &Mlp<F>, trace: &ForwardTrace, policy: &RatioPolicy) -> Result<InducedMatrix> {
    induced_matrix_range(mlp, trace, 0, mlp.layers() - 1, policy)
}

/// Reference route: knowledge map followed by explicit contraction.
pub fn induced_matrix_via_contributions<F: Real>(
    mlp: &Mlp<F>,
    trace: &ForwardTrace,
    policy: &RatioPolicy,
) -> Result<InducedMatrix> {
    let km = knowledge_map(mlp, trace, policy)?;
    let mut m = contract(&km.layers)?;
    m.near_zero = km.near_zero;
    Ok(m)
}
