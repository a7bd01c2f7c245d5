use std::collections::BTreeSet;

use super::lhs::{lhs_maximin_design, DesignBox};
use super::plan::{Pick, SelectionPlan, Strategy};
use crate::embed::{Clustering, EmbeddingSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::ImageId;

/// Dispersion of one cluster in embedding units.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary<T> {
    pub cluster: usize,
    pub members: Vec<ImageId>,
    /// Population standard deviation per embedding dimension.
    pub sigma: Vec<T>,
    /// Euclidean norm of `sigma`.
    pub spread: T,
}

/// Per-dimension population stdev of `rows` and its Euclidean norm.
pub fn spread_of<T: Scalar>(rows: &[Vec<T>]) -> (Vec<T>, T) {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n == 0 {
        return (vec![T::zero(); d], T::zero());
    }
    let nt = T::of_usize(n);
    let sigma: Vec<T> = (0..d)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<T>() / nt;
            (rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<T>() / nt).sqrt()
        })
        .collect();
    let spread = sigma.iter().map(|&s| s * s).sum::<T>().sqrt();
    (sigma, spread)
}

/// Spread over all members of `cluster`.
pub fn cluster_spread<T: Scalar>(clustering: &Clustering<T>, cluster: usize) -> Result<ClusterSummary<T>> {
    if cluster >= clustering.k {
        return Err(Error::UnknownCluster(cluster));
    }
    let idx = clustering.members(cluster);
    if idx.is_empty() {
        return Err(Error::UnknownCluster(cluster));
    }
    let rows: Vec<Vec<T>> = idx.iter().map(|&i| clustering.embedding.coords.row(i).to_vec()).collect();
    let (sigma, spread) = spread_of(&rows);
    Ok(ClusterSummary {
        cluster,
        members: idx.iter().map(|&i| clustering.embedding.ids[i].clone()).collect(),
        sigma,
        spread,
    })
}

/// Hands out `budget` slots one at a time, cycling over clusters in rank
/// order and skipping clusters whose capacity is used up.
pub fn allocate_budget(capacities: &[usize], budget: usize) -> Vec<usize> {
    let mut alloc = vec![0; capacities.len()];
    let mut left = budget;
    while left > 0 {
        let mut progressed = false;
        for (slot, &cap) in alloc.iter_mut().zip(capacities) {
            if left == 0 {
                break;
            }
            if *slot < cap {
                *slot += 1;
                left -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    alloc
}

/// SMILE selection for one round.
///
/// 1. Summarize every cluster over its unlabeled members.
/// 2. Rank clusters by descending spread (ties: lower cluster id).
/// 3. Allocate the budget cyclically over the ranked clusters.
/// 4. For a cluster owing `m` picks, lay a maximin LHS design of size `m`
///    over the bounding box of its unlabeled members (seed `seed ^ cluster`)
///    and snap each design point, in order, to the nearest untaken member
///    (distance ties: lower id).
pub fn smile_select<T: Scalar>(
    embedding: &EmbeddingSet<T>,
    clustering: &Clustering<T>,
    labeled: &BTreeSet<ImageId>,
    budget: usize,
    round: usize,
    seed: u64,
) -> Result<SelectionPlan> {
    if clustering.k == 0 || clustering.embedding.is_empty() {
        return Err(Error::EmptyClustering);
    }
    if embedding.dim() != 2 {
        return Err(Error::DimensionError(format!("SMILE needs a 2-D embedding, got {}", embedding.dim())));
    }
    let mut plan = SelectionPlan { round, strategy: Strategy::Smile, budget, seed, picks: Vec::new() };

    // canonical order: by id
    let mut order: Vec<usize> = (0..embedding.len()).collect();
    order.sort_by(|&a, &b| embedding.ids[a].cmp(&embedding.ids[b]));
    let mut by_cluster: Vec<Vec<(ImageId, [T; 2])>> = vec![Vec::new(); clustering.k];
    for i in order {
        let id = &embedding.ids[i];
        let ci = clustering
            .embedding
            .index_of(id)
            .ok_or_else(|| Error::InvalidInput(format!("{id} has no cluster assignment")))?;
        if labeled.contains(id) {
            continue;
        }
        let c = clustering.assignments[ci];
        by_cluster[c].push((id.clone(), [embedding.coords[[i, 0]], embedding.coords[[i, 1]]]));
    }
    let available: usize = by_cluster.iter().map(Vec::len).sum();
    if available < budget {
        return Err(Error::InsufficientPool { available, budget });
    }
    if budget == 0 {
        return Ok(plan);
    }

    let mut ranked: Vec<(usize, T)> = by_cluster
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(c, m)| {
            let rows: Vec<Vec<T>> = m.iter().map(|(_, p)| p.to_vec()).collect();
            (c, spread_of(&rows).1)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let capacities: Vec<usize> = ranked.iter().map(|&(c, _)| by_cluster[c].len()).collect();
    let alloc = allocate_budget(&capacities, budget);

    for (&(cluster, _), &m) in ranked.iter().zip(&alloc) {
        if m == 0 {
            continue;
        }
        let members = &by_cluster[cluster];
        let pts: Vec<[T; 2]> = members.iter().map(|(_, p)| *p).collect();
        let design = lhs_maximin_design(&DesignBox::bounding(&pts)?, m, seed ^ cluster as u64)?;
        let mut taken = vec![false; members.len()];
        for dp in &design.points {
            let mut best: Option<(usize, T)> = None;
            for (k, p) in pts.iter().enumerate() {
                if taken[k] {
                    continue;
                }
                let dx = p[0] - dp[0];
                let dy = p[1] - dp[1];
                let d = dx * dx + dy * dy;
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((k, d));
                }
            }
            let (k, _) = best.expect("allocation never exceeds cluster capacity");
            taken[k] = true;
            plan.picks.push(Pick {
                id: members[k].0.clone(),
                cluster: Some(cluster),
                design_point: Some([dp[0].as_f64(), dp[1].as_f64()]),
                ..Pick::default()
            });
        }
    }
    Ok(plan)
}
