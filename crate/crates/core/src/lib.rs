//! Cross-modal subspace learning with scheduled adaptive margin constraints.
//!
//! Paired visual/textual feature vectors are projected into a shared
//! D-dimensional space by two small tanh networks trained with a bidirectional
//! triplet hinge loss. The per-triplet margin is not a constant: a sigmoid
//! scheduler blends a static margin into an adaptively inferred one that
//! combines original-feature semantic distance with the separation of the
//! projected category centroids. Retrieval quality is measured as
//! bidirectional mean average precision over cosine rankings.
//!
//! The crate is organized along the pipeline:
//!
//! - [`numerics`]: vectors, matrices, seeded splittable randomness
//! - [`dataset`]: the feature interchange format, synthesis, distance stats
//! - [`projection`]: the two-tower networks with exact hand-derived gradients
//! - [`margin`]: scheduler, semantic/cluster margins, centroid tables, traces
//! - [`loss`]: in-batch triplet construction and the hinge loss
//! - [`trainer`]: the SGD/Nesterov training loop with model selection
//! - [`eval`]: bidirectional mAP with per-category breakdowns

pub mod dataset;
pub mod error;
pub mod eval;
pub mod loss;
pub mod margin;
pub mod numerics;
pub mod projection;
pub mod trainer;

pub use error::{Error, Result};
