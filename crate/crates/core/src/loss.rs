//! Triplet construction and the bidirectional max-margin hinge loss over
//! projected unit vectors, with exact subgradients w.r.t. the projections.
//!
//! The positive of a triplet is always the anchor instance's own
//! opposite-modality projection; negatives are drawn from the mini-batch
//! among instances of a different category, independently for each retrieval
//! direction. The per-triplet term is `max(0, f_m − s_pos + s_neg)`; at the
//! hinge boundary the zero subgradient is chosen, so satisfied constraints
//! are never perturbed.

use std::collections::HashMap;

use crate::dataset::MultimodalInstance;
use crate::error::{Error, Result};
use crate::numerics::{Rng, Vector};

/// Retrieval direction of a triplet's anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    ImageToText,
    TextToImage,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::ImageToText => "i2t",
            Direction::TextToImage => "t2i",
        }
    }

    /// (anchor modality, positive/negative modality)
    fn modalities(self) -> (Modality, Modality) {
        match self {
            Direction::ImageToText => (Modality::Visual, Modality::Textual),
            Direction::TextToImage => (Modality::Textual, Modality::Visual),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Visual,
    Textual,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Textual => "textual",
        }
    }
}

/// One ranking constraint. The positive is implicit: the anchor instance's
/// opposite-modality projection. `margin` starts at zero and is filled in by
/// the margin engine before the loss is evaluated.
#[derive(Debug, Clone)]
pub struct Triplet {
    pub direction: Direction,
    pub anchor_id: usize,
    pub negative_id: usize,
    pub anchor_category: usize,
    pub negative_category: usize,
    pub margin: f64,
}

/// Draws up to `n_neg` in-batch negatives per anchor and direction, uniformly
/// without replacement among batch members of a different category. Anchors
/// with no valid negative contribute no triplets. Deterministic for a given
/// generator state.
pub fn sample_triplets(
    batch: &[&MultimodalInstance],
    n_neg: usize,
    rng: &mut Rng,
) -> Vec<Triplet> {
    let mut triplets = Vec::new();
    for anchor in batch {
        let candidates: Vec<&MultimodalInstance> = batch
            .iter()
            .filter(|other| other.category != anchor.category)
            .copied()
            .collect();
        if candidates.is_empty() {
            continue;
        }
        for direction in [Direction::ImageToText, Direction::TextToImage] {
            let take = n_neg.min(candidates.len());
            // partial Fisher–Yates: the first `take` entries are a uniform
            // without-replacement draw
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            for d in 0..take {
                let j = d + rng.below(order.len() - d);
                order.swap(d, j);
            }
            for &pick in &order[..take] {
                let negative = candidates[pick];
                triplets.push(Triplet {
                    direction,
                    anchor_id: anchor.id,
                    negative_id: negative.id,
                    anchor_category: anchor.category,
                    negative_category: negative.category,
                    margin: 0.0,
                });
            }
        }
    }
    triplets
}

/// `max(0, margin − s_pos + s_neg)`.
pub fn hinge_term(margin: f64, s_pos: f64, s_neg: f64) -> f64 {
    (margin - s_pos + s_neg).max(0.0)
}

/// Projections of the current batch keyed by (instance id, modality).
pub type ProjectionTable = HashMap<(usize, Modality), Vector>;

/// Summed hinge loss of a batch plus the exact subgradients w.r.t. each
/// referenced projection. Inactive triplets contribute nothing, so
/// `total == 0` iff `active_count == 0`.
#[derive(Debug)]
pub struct BatchLoss {
    pub total: f64,
    pub active_count: usize,
    pub grads: HashMap<(usize, Modality), Vector>,
}

/// Evaluates the loss over `triplets` (margins already attached).
///
/// Per active triplet the similarity terms are linear in the projections:
/// `∂/∂p_a = p_neg − p_pos`, `∂/∂p_pos = −p_a`, `∂/∂p_neg = +p_a`.
pub fn batch_loss_and_grads(
    triplets: &[Triplet],
    projections: &ProjectionTable,
) -> Result<BatchLoss> {
    let lookup = |id: usize, modality: Modality| -> Result<&Vector> {
        projections.get(&(id, modality)).ok_or(Error::MissingProjection {
            id,
            modality: modality.as_str(),
        })
    };

    let mut total = 0.0;
    let mut active_count = 0;
    let mut grads: HashMap<(usize, Modality), Vector> = HashMap::new();

    for triplet in triplets {
        let (anchor_mod, opposite_mod) = triplet.direction.modalities();
        let p_anchor = lookup(triplet.anchor_id, anchor_mod)?;
        let p_pos = lookup(triplet.anchor_id, opposite_mod)?;
        let p_neg = lookup(triplet.negative_id, opposite_mod)?;

        let s_pos = p_anchor.dot(p_pos);
        let s_neg = p_anchor.dot(p_neg);
        let term = hinge_term(triplet.margin, s_pos, s_neg);
        if term > 0.0 {
            total += term;
            active_count += 1;
            let dim = p_anchor.dim();
            let mut add = |key: (usize, Modality), scale: f64, v: &Vector| {
                grads
                    .entry(key)
                    .or_insert_with(|| Vector::zeros(dim))
                    .add_scaled(scale, v);
            };
            add((triplet.anchor_id, anchor_mod), 1.0, p_neg);
            add((triplet.anchor_id, anchor_mod), -1.0, p_pos);
            add((triplet.anchor_id, opposite_mod), -1.0, p_anchor);
            add((triplet.negative_id, opposite_mod), 1.0, p_anchor);
        }
    }

    Ok(BatchLoss {
        total,
        active_count,
        grads,
    })
}
