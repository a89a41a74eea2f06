//! Induced matrices of a network on an input, and the geometry of the
//! matrix space they live in.
//!
//! For a chain MLP with layers `l = 0..L`, the knowledge map scales every
//! weight by the activation/pre-activation ratio of its source neuron (by
//! the input value for the first layer). Contracting the resulting affine
//! maps gives a `k x (d + 1)` matrix whose rows sum to the logits; the last
//! column accumulates every bias contribution.

mod iso;
mod knowledge;
mod matrix;
mod space;

pub use iso::{apply_isomorphism, Isomorphism};
pub use knowledge::{knowledge_map, KnowledgeMap, LayerContribution, RatioPolicy};
pub use matrix::{
    contract, induced_matrix, induced_matrix_from_trace, induced_matrix_range, induced_matrix_via_contributions,
    region_of, region_of_scores, row_sums, InducedMatrix, Region,
};
pub use space::{check_convexity, logit_norms, norms, MatrixDistances};
