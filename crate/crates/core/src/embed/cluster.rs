use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::squared_distance;
use crate::scalar::Scalar;

pub const KMEANS_RESTARTS: u64 = 10;
pub const KMEANS_MAX_ITER: usize = 300;

/// Hard partition of an embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<T> {
    pub embedding: EmbeddingSet<T>,
    pub k: usize,
    pub assignments: Vec<usize>,
    /// `k × d`
    pub centroids: Array2<T>,
    /// Within-cluster sum of squares.
    pub wcss: T,
}

impl<T: Scalar> Clustering<T> {
    /// Builds a clustering from explicit assignments, recomputing centroids.
    pub fn from_assignments(embedding: EmbeddingSet<T>, k: usize, assignments: Vec<usize>) -> Result<Self> {
        if assignments.len() != embedding.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} assignments for {} points",
                assignments.len(),
                embedding.len()
            )));
        }
        if let Some(&a) = assignments.iter().find(|&&a| a >= k) {
            return Err(Error::UnknownCluster(a));
        }
        let centroids = centroids_of(&embedding.coords, &assignments, k);
        if let Some(c) = (0..k).find(|&c| !assignments.contains(&c)) {
            return Err(Error::InvalidInput(format!("cluster {c} is empty")));
        }
        let wcss = wcss(&embedding.coords, &assignments, &centroids);
        Ok(Self { embedding, k, assignments, centroids, wcss })
    }

    /// Point indices per cluster, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == cluster).collect()
    }
}

fn centroids_of<T: Scalar>(points: &Array2<T>, assign: &[usize], k: usize) -> Array2<T> {
    let d = points.ncols();
    let mut sums = Array2::<T>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (i, &c) in assign.iter().enumerate() {
        counts[c] += 1;
        for j in 0..d {
            sums[[c, j]] = sums[[c, j]] + points[[i, j]];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let n = T::of_usize(counts[c]);
            sums.row_mut(c).mapv_inplace(|v| v / n);
        }
    }
    sums
}

fn wcss<T: Scalar>(points: &Array2<T>, assign: &[usize], centroids: &Array2<T>) -> T {
    assign
        .iter()
        .enumerate()
        .map(|(i, &c)| squared_distance(points.row(i), centroids.row(c)))
        .sum()
}

fn nearest<T: Scalar>(p: ArrayView1<T>, centroids: &Array2<T>) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for c in 0..centroids.nrows() {
        let d = squared_distance(p, centroids.row(c));
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn plus_plus_init<T: Scalar>(points: &Array2<T>, k: usize, rng: &mut ChaCha8Rng) -> Array2<T> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<T> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: T = d2.iter().copied().sum();
        let next = if total > T::zero() {
            let r = T::of(rng.random::<f64>()) * total;
            let mut acc = T::zero();
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc = acc + w;
                if w > T::zero() && acc > r {
                    pick = i;
                    break;
                }
            }
            while d2[pick] == T::zero() {
                pick -= 1;
            }
            pick
        } else {
            // fewer distinct points than k; empty clusters get repaired later
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for i in 0..n {
            let d = squared_distance(points.row(i), points.row(next));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    let mut centroids = Array2::zeros((k, points.ncols()));
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).assign(&points.row(i));
    }
    centroids
}

/// Moves points into empty clusters: each empty cluster takes the point
/// farthest from its own centroid among clusters with more than one member.
fn repair_empty<T: Scalar>(points: &Array2<T>, assign: &mut [usize], centroids: &mut Array2<T>, k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &c in assign.iter() {
            counts[c] += 1;
        }
        let Some(empty) = (0..k).find(|&c| counts[c] == 0) else {
            return;
        };
        let mut best: Option<(usize, T)> = None;
        for (i, &c) in assign.iter().enumerate() {
            if counts[c] < 2 {
                continue;
            }
            let d = squared_distance(points.row(i), centroids.row(c));
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("k <= n guarantees a donor cluster");
        assign[i] = empty;
        *centroids = centroids_of(points, assign, k);
    }
}

/// One Lloyd run from the given centroids. Returns assignments, centroids and
/// the WCSS after every assignment step.
pub(crate) fn lloyd<T: Scalar>(points: &Array2<T>, mut centroids: Array2<T>) -> (Vec<usize>, Array2<T>, Vec<T>) {
    let n = points.nrows();
    let k = centroids.nrows();
    let mut assign: Vec<usize> = (0..n).map(|i| nearest(points.row(i), &centroids)).collect();
    repair_empty(points, &mut assign, &mut centroids, k);
    let mut history = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        centroids = centroids_of(points, &assign, k);
        history.push(wcss(points, &assign, &centroids));
        let mut next: Vec<usize> = (0..n).map(|i| nearest(points.row(i), &centroids)).collect();
        // keep the current cluster on exact ties so the fixpoint is reachable
        for i in 0..n {
            let cur = squared_distance(points.row(i), centroids.row(assign[i]));
            let new = squared_distance(points.row(i), centroids.row(next[i]));
            if new >= cur {
                next[i] = assign[i];
            }
        }
        repair_empty(points, &mut next, &mut centroids, k);
        if next == assign {
            break;
        }
        assign = next;
    }
    centroids = centroids_of(points, &assign, k);
    (assign, centroids, history)
}

/// k-means++ seeded Lloyd iterations, best of 10 restarts (seeds
/// `seed..seed+9`) by within-cluster sum of squares.
pub fn kmeans<T: Scalar>(embedding: &EmbeddingSet<T>, k: usize, seed: u64) -> Result<Clustering<T>> {
    let n = embedding.len();
    if k < 2 || k > n {
        return Err(Error::KOutOfRange { k, min: 2, max: n });
    }
    let points = &embedding.coords;
    let mut best: Option<(Vec<usize>, Array2<T>, T)> = None;
    for r in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r));
        let init = plus_plus_init(points, k, &mut rng);
        let (assign, centroids, _) = lloyd(points, init);
        let score = wcss(points, &assign, &centroids);
        if best.as_ref().is_none_or(|b| score < b.2) {
            best = Some((assign, centroids, score));
        }
    }
    let (assignments, centroids, wcss) = best.expect("at least one restart");
    Ok(Clustering { embedding: embedding.clone(), k, assignments, centroids, wcss })
}

/// Per-point silhouette values; singletons score 0.
pub fn silhouette_samples<T: Scalar>(clustering: &Clustering<T>) -> Result<Vec<T>> {
    let pts = &clustering.embedding.coords;
    let n = pts.nrows();
    let k = clustering.k;
    if k < 2 {
        return Err(Error::KOutOfRange { k, min: 2, max: n });
    }
    if n < 3 {
        return Err(Error::DegenerateInput(format!("silhouette needs N >= 3, got {n}")));
    }
    if (1..n).all(|i| pts.row(i) == pts.row(0)) {
        return Err(Error::DegenerateInput("all points identical".into()));
    }
    let assign = &clustering.assignments;
    let mut sizes = vec![0usize; k];
    for &c in assign {
        sizes[c] += 1;
    }
    let mut out = Vec::with_capacity(n);
    let mut sums = vec![T::zero(); k];
    for i in 0..n {
        let own = assign[i];
        if sizes[own] == 1 {
            out.push(T::zero());
            continue;
        }
        sums.fill(T::zero());
        for j in 0..n {
            if j != i {
                sums[assign[j]] = sums[assign[j]] + squared_distance(pts.row(i), pts.row(j)).sqrt();
            }
        }
        let a = sums[own] / T::of_usize(sizes[own] - 1);
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / T::of_usize(sizes[c]))
            .fold(T::infinity(), T::min);
        let m = a.max(b);
        out.push(if m > T::zero() { (b - a) / m } else { T::zero() });
    }
    Ok(out)
}

/// Mean silhouette in `[−1, 1]`.
pub fn silhouette<T: Scalar>(clustering: &Clustering<T>) -> Result<T> {
    let s = silhouette_samples(clustering)?;
    let n = T::of_usize(s.len());
    Ok(s.into_iter().sum::<T>() / n)
}

/// `[2, min(10, ⌊N/3⌋)]`, widened to at least `[2, 2]` and capped at `N − 1`.
pub fn default_k_range(n: usize) -> (usize, usize) {
    let hi = (n / 3).min(10).max(2).min(n.saturating_sub(1));
    (2, hi)
}

/// Runs k-means for every k in range and keeps the highest mean silhouette;
/// ties go to the smaller k.
pub fn select_k<T: Scalar>(embedding: &EmbeddingSet<T>, k_min: usize, k_max: usize, seed: u64) -> Result<Clustering<T>> {
    let n = embedding.len();
    if k_min < 2 || k_min > k_max || k_max + 1 > n {
        return Err(Error::KOutOfRange { k: k_max, min: k_min.max(2), max: n.saturating_sub(1) });
    }
    let mut runs = Vec::new();
    for k in k_min..=k_max {
        let c = kmeans(embedding, k, seed)?;
        let s = silhouette(&c)?;
        log::debug!("k = {k}: silhouette {s}");
        runs.push((c, s));
    }
    let best = best_score(runs.iter().map(|r| r.1));
    Ok(runs.swap_remove(best).0)
}

/// Index of the maximal score, first one on ties.
fn best_score<T: Scalar>(scores: impl Iterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, s) in scores.enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.expect("non-empty").0
}
