//! Per-round subset selection: SMILE (spread-ranked clusters sampled with
//! maximin Latin-hypercube designs), ensemble uncertainty, and random.

mod lhs;
mod plan;
mod smile;

pub use lhs::{lhs_maximin_design, min_pairwise_distance, DesignBox, LhsDesign, EXHAUSTIVE_MAX, RANDOM_CANDIDATES};
pub use plan::{Pick, SelectionPlan, Strategy};
pub use smile::{allocate_budget, cluster_spread, smile_select, spread_of, ClusterSummary};

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ImageId;

/// Sorted, de-duplicated pool minus the labeled set.
pub(crate) fn unlabeled(pool: &[ImageId], labeled: &BTreeSet<ImageId>) -> Vec<ImageId> {
    let set: BTreeSet<&ImageId> = pool.iter().filter(|id| !labeled.contains(*id)).collect();
    set.into_iter().cloned().collect()
}

/// Top-`budget` unlabeled ids by descending score; ties go to the lower id.
pub fn uncertainty_select(
    pool: &[ImageId],
    scores: &BTreeMap<ImageId, f64>,
    labeled: &BTreeSet<ImageId>,
    budget: usize,
    round: usize,
    seed: u64,
) -> Result<SelectionPlan> {
    let candidates = unlabeled(pool, labeled);
    if candidates.len() < budget {
        return Err(Error::InsufficientPool { available: candidates.len(), budget });
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for id in candidates {
        match scores.get(&id) {
            Some(&s) if s.is_finite() => scored.push((id, s)),
            _ => return Err(Error::MissingScore(id)),
        }
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    let picks = scored
        .into_iter()
        .take(budget)
        .map(|(id, s)| Pick { id, score: Some(s), ..Pick::default() })
        .collect();
    Ok(SelectionPlan { round, strategy: Strategy::Uncertainty, budget, seed, picks })
}

/// Uniform sample without replacement from the unlabeled pool, in draw order.
pub fn random_select(
    pool: &[ImageId],
    labeled: &BTreeSet<ImageId>,
    budget: usize,
    round: usize,
    seed: u64,
) -> Result<SelectionPlan> {
    let candidates = unlabeled(pool, labeled);
    if candidates.len() < budget {
        return Err(Error::InsufficientPool { available: candidates.len(), budget });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, candidates.len(), budget)
        .into_iter()
        .enumerate()
        .map(|(draw, i)| Pick { id: candidates[i].clone(), draw: Some(draw), ..Pick::default() })
        .collect();
    Ok(SelectionPlan { round, strategy: Strategy::Random, budget, seed, picks })
}
