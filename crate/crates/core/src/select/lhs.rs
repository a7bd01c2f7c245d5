//! Maximin Latin-hypercube designs in a 2-D box.
//!
//! Each axis is cut into `m` equal strata and points sit at stratum centers:
//! point `i` is `(x_center[i], y_center[perm[i]])`. The design is the
//! permutation maximizing the minimum pairwise distance, ties going to the
//! lexicographically smallest permutation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Designs up to this size are solved by enumerating all `m!` permutations.
pub const EXHAUSTIVE_MAX: usize = 6;
/// Random permutations tried before hill climbing for larger designs.
pub const RANDOM_CANDIDATES: usize = 10_000;

/// Axis-aligned box `[lo.x, hi.x] × [lo.y, hi.y]`; zero-width axes allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignBox<T> {
    pub lo: [T; 2],
    pub hi: [T; 2],
}

impl<T: Scalar> DesignBox<T> {
    pub fn new(lo: [T; 2], hi: [T; 2]) -> Result<Self> {
        for a in 0..2 {
            if !lo[a].is_finite() || !hi[a].is_finite() || hi[a] < lo[a] {
                return Err(Error::InvalidBox(format!("axis {a}: [{}, {}]", lo[a], hi[a])));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: [T::zero(); 2], hi: [T::one(); 2] }
    }

    /// Bounding box of a point set.
    pub fn bounding(points: &[[T; 2]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidBox("no points".into()));
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Self::new(lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LhsDesign<T> {
    /// Points in design order.
    pub points: Vec<[T; 2]>,
    pub permutation: Vec<usize>,
    /// `None` for single-point designs.
    pub min_distance: Option<T>,
}

/// Minimum pairwise Euclidean distance, `None` for fewer than two points.
pub fn min_pairwise_distance<T: Scalar>(points: &[[T; 2]]) -> Option<T> {
    let mut best: Option<T> = None;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let dx = points[i][0] - points[j][0];
            let dy = points[i][1] - points[j][1];
            let d = (dx * dx + dy * dy).sqrt();
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    best
}

/// Squared maximin criterion evaluated on stratum index differences, so
/// mirror-image designs produce bit-identical values.
fn criterion<T: Scalar>(perm: &[usize], wx: T, wy: T) -> T {
    let m = perm.len();
    let mut best = T::infinity();
    for i in 0..m {
        for j in i + 1..m {
            let dx = T::of_usize(j - i) * wx;
            let dy = T::of_usize(perm[i].abs_diff(perm[j])) * wy;
            let d = dx * dx + dy * dy;
            if d < best {
                best = d;
            }
        }
    }
    best
}

fn better<T: Scalar>(a: (T, &[usize]), b: (T, &[usize])) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

pub fn lhs_maximin_design<T: Scalar>(bounds: &DesignBox<T>, m: usize, seed: u64) -> Result<LhsDesign<T>> {
    let bounds = DesignBox::new(bounds.lo, bounds.hi)?;
    if m == 0 {
        return Err(Error::InvalidInput("design size must be at least 1".into()));
    }
    let mt = T::of_usize(m);
    let wx = (bounds.hi[0] - bounds.lo[0]) / mt;
    let wy = (bounds.hi[1] - bounds.lo[1]) / mt;

    let mut best: Vec<usize> = (0..m).collect();
    let mut best_score = criterion(&best, wx, wy);
    if m <= EXHAUSTIVE_MAX {
        let mut perm = best.clone();
        while next_permutation(&mut perm) {
            let s = criterion(&perm, wx, wy);
            if better((s, &perm), (best_score, &best)) {
                best_score = s;
                best.clone_from(&perm);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..m).collect();
        for _ in 0..RANDOM_CANDIDATES {
            perm.shuffle(&mut rng);
            let s = criterion(&perm, wx, wy);
            if better((s, &perm), (best_score, &best)) {
                best_score = s;
                best.clone_from(&perm);
            }
        }
        // pairwise-swap hill climbing
        let mut improved = true;
        while improved {
            improved = false;
            for a in 0..m {
                for b in a + 1..m {
                    best.swap(a, b);
                    let s = criterion(&best, wx, wy);
                    let mut undo = best.clone();
                    undo.swap(a, b);
                    if better((s, &best), (best_score, &undo)) {
                        best_score = s;
                        improved = true;
                    } else {
                        best.swap(a, b);
                    }
                }
            }
        }
    }

    let half = T::of(0.5);
    let center = |axis: usize, k: usize, w: T| bounds.lo[axis] + (T::of_usize(k) + half) * w;
    let points: Vec<[T; 2]> = (0..m).map(|i| [center(0, i, wx), center(1, best[i], wy)]).collect();
    let min_distance = min_pairwise_distance(&points);
    Ok(LhsDesign { points, permutation: best, min_distance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_center() {
        let b = DesignBox::new([2.0, -1.0], [4.0, 3.0]).unwrap();
        let d = lhs_maximin_design(&b, 1, 0).unwrap();
        assert_eq!(d.points, vec![[3.0, 1.0]]);
        assert_eq!(d.min_distance, None);
    }

    #[test]
    fn two_points_identity_wins_tie() {
        let d = lhs_maximin_design(&DesignBox::<f64>::unit(), 2, 0).unwrap();
        assert_eq!(d.points, vec![[0.25, 0.25], [0.75, 0.75]]);
        assert_eq!(d.permutation, vec![0, 1]);
        assert!((d.min_distance.unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_axis_collapses() {
        let b = DesignBox::new([0.0, 5.0], [3.0, 5.0]).unwrap();
        let d = lhs_maximin_design(&b, 3, 0).unwrap();
        assert!(d.points.iter().all(|p| p[1] == 5.0));
        assert_eq!(d.points.iter().map(|p| p[0]).collect::<Vec<_>>(), vec![0.5, 1.5, 2.5]);
    }

    #[test]
    fn invalid_boxes() {
        assert!(matches!(DesignBox::new([1.0, 0.0], [0.0, 1.0]), Err(Error::InvalidBox(_))));
        assert!(matches!(DesignBox::new([0.0, 0.0], [f64::NAN, 1.0]), Err(Error::InvalidBox(_))));
        assert!(lhs_maximin_design(&DesignBox::<f64>::unit(), 0, 0).is_err());
    }

    #[test]
    fn permutations_enumerate_in_order() {
        let mut p = vec![0, 1, 2];
        let mut seen = vec![p.clone()];
        while next_permutation(&mut p) {
            seen.push(p.clone());
        }
        assert_eq!(seen.len(), 6);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn large_design_is_stratified_and_seeded() {
        let b = DesignBox::new([0.0f64, 0.0], [10.0, 2.0]).unwrap();
        let d = lhs_maximin_design(&b, 9, 4).unwrap();
        let mut perm = d.permutation.clone();
        perm.sort();
        assert_eq!(perm, (0..9).collect::<Vec<_>>());
        assert_eq!(d, lhs_maximin_design(&b, 9, 4).unwrap());
    }

    #[test]
    fn f32_design() {
        let d = lhs_maximin_design(&DesignBox::<f32>::unit(), 2, 0).unwrap();
        assert_eq!(d.points, vec![[0.25f32, 0.25], [0.75, 0.75]]);
    }
}
