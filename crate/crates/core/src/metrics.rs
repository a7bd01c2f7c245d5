//! Segmentation scores (pixel confusion, macro F1) and embedding coverage
//! (exact 1-D and sliced Wasserstein-1).

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingSet;
use crate::error::{Error, Result};
use crate::raster::Mask;
use crate::scalar::Scalar;
use crate::ImageId;

/// Projection count used when none is given.
pub const DEFAULT_PROJECTIONS: usize = 64;

/// Pixel counts with defect as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Same counts with background as the positive class.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

pub fn pixel_confusion(pred: &Mask, truth: &Mask) -> Result<ConfusionCounts> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs truth {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores for the positive class of `c`. A class absent from both
/// prediction and truth scores 1 across the board.
pub fn class_scores(c: &ConfusionCounts) -> ClassScores {
    if c.tp + c.fp + c.fn_ == 0 {
        return ClassScores { precision: 1.0, recall: 1.0, f1: 1.0 };
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    ClassScores { precision, recall, f1 }
}

/// Scores of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    #[serde(default)]
    pub image_id: ImageId,
    pub counts: ConfusionCounts,
    pub defect: ClassScores,
    pub background: ClassScores,
    pub macro_f1: f64,
}

pub fn macro_f1(counts: ConfusionCounts) -> ImageMetrics {
    let defect = class_scores(&counts);
    let background = class_scores(&counts.swapped());
    ImageMetrics {
        image_id: ImageId::new(),
        counts,
        defect,
        background,
        macro_f1: (defect.f1 + background.f1) / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub images: Vec<ImageMetrics>,
    /// Per-class scores averaged over images.
    pub defect: ClassScores,
    pub background: ClassScores,
    pub mean_macro_f1: f64,
    /// Population standard deviation of per-image macro F1.
    pub std_macro_f1: f64,
}

impl MetricsReport {
    pub fn from_images(images: Vec<ImageMetrics>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptySample);
        }
        let n = images.len() as f64;
        let mean = |f: &dyn Fn(&ImageMetrics) -> f64| images.iter().map(f).sum::<f64>() / n;
        let mean_macro_f1 = mean(&|m| m.macro_f1);
        let var = mean(&|m| (m.macro_f1 - mean_macro_f1).powi(2));
        Ok(Self {
            defect: ClassScores {
                precision: mean(&|m| m.defect.precision),
                recall: mean(&|m| m.defect.recall),
                f1: mean(&|m| m.defect.f1),
            },
            background: ClassScores {
                precision: mean(&|m| m.background.precision),
                recall: mean(&|m| m.background.recall),
                f1: mean(&|m| m.background.f1),
            },
            mean_macro_f1,
            std_macro_f1: var.sqrt(),
            images,
        })
    }
}

/// Scores every `(id, prediction, truth)` triple and aggregates.
pub fn evaluate(items: &[(ImageId, Mask, Mask)]) -> Result<MetricsReport> {
    let images = items
        .iter()
        .map(|(id, pred, truth)| {
            let mut m = macro_f1(pixel_confusion(pred, truth)?);
            m.image_id = id.clone();
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_images(images)
}

/// Exact W1 between two empirical distributions: the integral of the
/// absolute CDF difference over the merged support.
pub fn wasserstein_1d<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (T::of_usize(a.len()), T::of_usize(b.len()));
    let (mut i, mut j) = (0, 0);
    let mut total = T::zero();
    let mut x = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        // advance past every sample at the current support point
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let next = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => break,
        };
        let diff = (T::of_usize(i) / na - T::of_usize(j) / nb).abs();
        total = total + diff * (next - x);
        x = next;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub strategy: String,
    pub subset_size: usize,
    pub full_size: usize,
    /// Always `"sliced_w1"`: the mean of exact 1-D W1 over evenly spaced
    /// projection angles `l·π/L`.
    pub method: String,
    pub projections: usize,
    pub sliced_w1: f64,
    /// Exact 1-D W1 along each embedding axis.
    pub axis_w1: Vec<f64>,
}

fn column<T: Scalar>(m: &ArrayView2<T>, j: usize) -> Vec<T> {
    m.column(j).to_vec()
}

/// Sliced W1 between two 2-D point clouds over `projections` angles.
pub fn sliced_wasserstein_points<T: Scalar>(a: &Array2<T>, b: &Array2<T>, projections: usize) -> Result<T> {
    if projections == 0 {
        return Err(Error::InvalidInput("projection count must be at least 1".into()));
    }
    if a.ncols() != 2 || b.ncols() != 2 {
        return Err(Error::DimensionError(format!("sliced W1 needs 2-D points, got {} and {}", a.ncols(), b.ncols())));
    }
    let mut sum = T::zero();
    for l in 0..projections {
        let theta = std::f64::consts::PI * l as f64 / projections as f64;
        let (c, s) = (T::of(theta.cos()), T::of(theta.sin()));
        let project = |m: &Array2<T>| m.rows().into_iter().map(|r| r[0] * c + r[1] * s).collect::<Vec<T>>();
        sum = sum + wasserstein_1d(&project(a), &project(b))?;
    }
    Ok(sum / T::of_usize(projections))
}

/// Coverage of `subset` relative to `full`; every subset id must occur in
/// `full`.
pub fn sliced_wasserstein<T: Scalar>(
    subset: &EmbeddingSet<T>,
    full: &EmbeddingSet<T>,
    projections: usize,
    strategy: &str,
) -> Result<CoverageReport> {
    if let Some(id) = subset.ids.iter().find(|id| full.index_of(id).is_none()) {
        return Err(Error::SubsetNotContained(id.clone()));
    }
    if subset.dim() != full.dim() {
        return Err(Error::DimensionMismatch(format!("subset dim {} vs full dim {}", subset.dim(), full.dim())));
    }
    let sliced = sliced_wasserstein_points(&subset.coords, &full.coords, projections)?;
    let axis_w1 = (0..full.dim())
        .map(|j| wasserstein_1d(&column(&subset.coords.view(), j), &column(&full.coords.view(), j)).map(|v| v.as_f64()))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoverageReport {
        strategy: strategy.to_string(),
        subset_size: subset.len(),
        full_size: full.len(),
        method: "sliced_w1".into(),
        projections,
        sliced_w1: sliced.as_f64(),
        axis_w1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    /// Equal-size W1 by sorted coupling.
    fn coupling(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn confusion_examples() {
        let truth = Mask::from_fn(10, 10, |x, y| y == 0 && x < 10).unwrap();
        let c = pixel_confusion(&truth, &truth).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 10, fp: 0, fn_: 0, tn: 90 });
        let none = Mask::empty(10, 10).unwrap();
        let c = pixel_confusion(&none, &truth).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 0, fp: 0, fn_: 10, tn: 90 });
        assert!(pixel_confusion(&Mask::empty(3, 3).unwrap(), &truth).is_err());
    }

    #[test]
    fn macro_f1_examples() {
        let m = macro_f1(ConfusionCounts { tp: 8, fp: 2, fn_: 2, tn: 88 });
        assert!((m.defect.f1 - 0.8).abs() < 1e-12);
        assert!((m.background.f1 - 88.0 / 90.0).abs() < 1e-12);
        assert!((m.macro_f1 - 0.888_888_888_9).abs() < 1e-9);
        assert_eq!(macro_f1(ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 100 }).macro_f1, 1.0);
        assert_eq!(macro_f1(ConfusionCounts { tp: 10, fp: 0, fn_: 0, tn: 90 }).macro_f1, 1.0);
        // all wrong
        assert_eq!(macro_f1(ConfusionCounts { tp: 0, fp: 5, fn_: 5, tn: 0 }).macro_f1, 0.0);
    }

    #[test]
    fn report_aggregates() {
        let imgs = vec![
            macro_f1(ConfusionCounts { tp: 8, fp: 2, fn_: 2, tn: 88 }),
            macro_f1(ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 100 }),
            macro_f1(ConfusionCounts { tp: 0, fp: 5, fn_: 5, tn: 0 }),
        ];
        let r = MetricsReport::from_images(imgs).unwrap();
        let vals = [(0.8 + 88.0 / 90.0) / 2.0, 1.0, 0.0];
        let mean = vals.iter().sum::<f64>() / 3.0;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert_eq!(r.mean_macro_f1, mean);
        assert_eq!(r.std_macro_f1, sd);
        assert!(MetricsReport::from_images(vec![]).is_err());
    }

    #[test]
    fn w1_examples() {
        assert_eq!(wasserstein_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[0.0, 0.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[3.0, 1.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&[0.0], &[0.0, 3.0, 3.0]).unwrap(), 2.0);
        assert!(matches!(wasserstein_1d::<f64>(&[], &[1.0]), Err(Error::EmptySample)));
        assert_eq!(wasserstein_1d(&[0.0f32, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn sliced_translation() {
        let a = array![[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5], [0.3, -0.7]];
        let b = a.mapv(|v| v) + &array![[1.0, 0.0]];
        let d = sliced_wasserstein_points(&a, &b, 64).unwrap();
        assert!((d - 2.0 / std::f64::consts::PI).abs() < 1e-3, "{d}");
        assert_eq!(sliced_wasserstein_points(&a, &a, 64).unwrap(), 0.0);
    }

    #[test]
    fn sliced_report() {
        let full = EmbeddingSet::new(
            (0..6).map(|i| format!("p{i}")).collect(),
            array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [5.0, 5.0], [2.0, 3.0]],
        )
        .unwrap();
        let same = sliced_wasserstein(&full, &full, 64, "all").unwrap();
        assert_eq!(same.sliced_w1, 0.0);
        assert_eq!(same.axis_w1, vec![0.0, 0.0]);
        let sub = full.subset(&["p0".into(), "p4".into()]).unwrap();
        assert!(sliced_wasserstein(&sub, &full, 64, "x").unwrap().sliced_w1 > 0.0);
        let alien = EmbeddingSet::new(vec!["zz".into()], array![[0.0, 0.0]]).unwrap();
        assert!(matches!(sliced_wasserstein(&alien, &full, 64, "x"), Err(Error::SubsetNotContained(_))));
    }

    proptest! {
        #[test]
        fn w1_matches_coupling(a in prop::collection::vec(-100.0f64..100.0, 1..20), seed in 0u64..1000) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * 0.5 + ((seed + i as u64) % 7) as f64).collect();
            let got = wasserstein_1d(&a, &b).unwrap();
            prop_assert!((got - coupling(&a, &b)).abs() <= 1e-9 * (1.0 + got));
        }

        #[test]
        fn w1_metric_axioms(
            a in prop::collection::vec(-10.0f64..10.0, 1..8),
            b in prop::collection::vec(-10.0f64..10.0, 1..8),
            c in prop::collection::vec(-10.0f64..10.0, 1..8),
            shift in -5.0f64..5.0,
        ) {
            let ab = wasserstein_1d(&a, &b).unwrap();
            prop_assert!((ab - wasserstein_1d(&b, &a).unwrap()).abs() < 1e-12);
            let ac = wasserstein_1d(&a, &c).unwrap();
            let cb = wasserstein_1d(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-9);
            let shifted: Vec<f64> = a.iter().map(|v| v + shift).collect();
            prop_assert!((wasserstein_1d(&a, &shifted).unwrap() - shift.abs()).abs() < 1e-9);
        }

        #[test]
        fn macro_f1_relabel_symmetry(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
            let c = ConfusionCounts { tp, fp, fn_, tn };
            prop_assert_eq!(macro_f1(c).macro_f1, macro_f1(c.swapped()).macro_f1);
        }
    }
}
