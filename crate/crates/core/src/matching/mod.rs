//! Reference-to-target feature matching.

pub mod adain;
pub mod neighbors;
pub mod patches;
pub mod unit;

pub use adain::{instance_normalize, Adain};
pub use neighbors::Neighborhood;
pub use patches::{fold_patches, unfold_patches, PatchGeometry};
pub use unit::{MatchMode, MatchUnit};

use crate::blocks::attention::l2_normalize_last;
use crate::autodiff::Var;
use crate::error::{CanmError, Result};

/// Outcome of matching every query patch against its candidate reference patches.
#[derive(Clone, Debug)]
pub struct MatchResult {
    /// Cosine similarities `[B, M, J]`, zero at invalid offsets.
    pub similarity: Var,
    /// Soft attention `[B, M, J]`; rows sum to one over valid offsets.
    pub attention: Var,
    /// Attention-weighted reference patches `[B, M, L]`.
    pub matched: Var,
    pub neighborhood: Neighborhood,
    /// Number of query/candidate similarity evaluations performed.
    pub evaluations: usize,
}

impl MatchResult {
    pub fn mask(&self) -> &[bool] {
        self.neighborhood.mask()
    }
}

/// Cosine-similarity soft attention over the candidates in `nb`, gated by `w: [J]`.
pub fn nbfm_match(p_deg: &Var, p_ref: &Var, nb: &Neighborhood, w: &Var) -> Result<MatchResult> {
    if w.shape() != [nb.offsets()] {
        return Err(CanmError::shape(format!(
            "matching weight must be [{}], got {:?}",
            nb.offsets(),
            w.shape()
        )));
    }
    let q = l2_normalize_last(p_deg)?;
    let r = l2_normalize_last(p_ref)?;
    let similarity = nb.dot(&q, &r)?;
    let attention = similarity.mul(w)?.masked_softmax_last(nb.mask())?;
    let matched = nb.aggregate(&attention, p_ref)?;
    Ok(MatchResult {
        evaluations: p_deg.shape()[0] * nb.valid_pairs(),
        similarity,
        attention,
        matched,
        neighborhood: nb.clone(),
    })
}

/// Every reference patch is a candidate for every query. Candidates are
/// indexed by relative offset, so `w` has `(2*gh - 1) * (2*gw - 1)` entries.
pub fn global_match(p_deg: &Var, p_ref: &Var, gh: usize, gw: usize, w: &Var) -> Result<MatchResult> {
    nbfm_match(p_deg, p_ref, &Neighborhood::covering(gh, gw)?, w)
}
