//! Gaussian naive-Bayes pixel classifier used as a desk-scale stand-in for a
//! trained segmentation network.
//!
//! Each pixel is described by its intensity and the mean and population
//! stdev of the 5×5 window around it (clipped at the image border).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Mask, ProbMap, Raster};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const BOOTSTRAP_MEMBERS: usize = 10;
const WINDOW_RADIUS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub mean: [f64; 3],
    pub var: [f64; 3],
}

/// Index 0 is background, index 1 is defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLearner {
    pub classes: [ClassModel; 2],
    pub log_prior: [f64; 2],
}

/// `[intensity, local mean, local stdev]` per pixel, row-major.
pub fn pixel_features(image: &Raster) -> Vec<[f64; 3]> {
    let (w, h) = (image.width(), image.height());
    // integral images with a zero border row/column
    let stride = w + 1;
    let mut s1 = vec![0u64; stride * (h + 1)];
    let mut s2 = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            let v = image.get(x, y) as u64;
            let i = (y + 1) * stride + x + 1;
            s1[i] = v + s1[i - 1] + s1[i - stride] - s1[i - stride - 1];
            s2[i] = v * v + s2[i - 1] + s2[i - stride] - s2[i - stride - 1];
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let y0 = y.saturating_sub(WINDOW_RADIUS);
        let y1 = (y + WINDOW_RADIUS + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(WINDOW_RADIUS);
            let x1 = (x + WINDOW_RADIUS + 1).min(w);
            let rect = |s: &[u64]| s[y1 * stride + x1] + s[y0 * stride + x0] - s[y0 * stride + x1] - s[y1 * stride + x0];
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            let mean = rect(&s1) as f64 / n;
            let var = (rect(&s2) as f64 / n - mean * mean).max(0.0);
            out.push([image.get(x, y) as f64, mean, var.sqrt()]);
        }
    }
    out
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: f64,
    sum: [f64; 3],
    sum_sq: [f64; 3],
}

impl Moments {
    fn add(&mut self, f: &[f64; 3], weight: f64) {
        self.n += weight;
        for d in 0..3 {
            self.sum[d] += weight * f[d];
            self.sum_sq[d] += weight * f[d] * f[d];
        }
    }

    fn model(&self) -> ClassModel {
        let mut mean = [0.0; 3];
        let mut var = [0.0; 3];
        for d in 0..3 {
            mean[d] = self.sum[d] / self.n;
            var[d] = (self.sum_sq[d] / self.n - mean[d] * mean[d]).max(VARIANCE_FLOOR);
        }
        ClassModel { mean, var }
    }
}

impl SimLearner {
    /// Maximum-likelihood fit from labeled feature rows (label 1 = defect).
    pub fn fit_features(features: &[[f64; 3]], labels: &[u8]) -> Result<Self> {
        Self::fit_weighted(features, labels, |_| 1.0)
    }

    fn fit_weighted(features: &[[f64; 3]], labels: &[u8], weight: impl Fn(usize) -> f64) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {} labels",
                features.len(),
                labels.len()
            )));
        }
        let mut m = [Moments::default(); 2];
        for (i, (f, &l)) in features.iter().zip(labels).enumerate() {
            let w = weight(i);
            if w > 0.0 {
                m[(l == 1) as usize].add(f, w);
            }
        }
        if m[0].n == 0.0 || m[1].n == 0.0 {
            return Err(Error::SingleClassTraining);
        }
        let total = m[0].n + m[1].n;
        Ok(Self {
            classes: [m[0].model(), m[1].model()],
            log_prior: [(m[0].n / total).ln(), (m[1].n / total).ln()],
        })
    }

    fn log_joint(&self, class: usize, f: &[f64; 3]) -> f64 {
        let c = &self.classes[class];
        let mut l = self.log_prior[class];
        for d in 0..3 {
            let diff = f[d] - c.mean[d];
            l -= 0.5 * (2.0 * std::f64::consts::PI * c.var[d]).ln() + diff * diff / (2.0 * c.var[d]);
        }
        l
    }

    /// Posterior probability of the defect class.
    pub fn posterior(&self, f: &[f64; 3]) -> f64 {
        let l0 = self.log_joint(0, f);
        let l1 = self.log_joint(1, f);
        (1.0 / (1.0 + (l0 - l1).exp())).clamp(0.0, 1.0)
    }
}

fn training_rows(pairs: &[(Raster, Mask)]) -> Result<(Vec<[f64; 3]>, Vec<u8>)> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (img, mask) in pairs {
        if img.width() != mask.width() || img.height() != mask.height() {
            return Err(Error::DimensionMismatch(format!(
                "image {}x{} vs mask {}x{}",
                img.width(),
                img.height(),
                mask.width(),
                mask.height()
            )));
        }
        features.extend(pixel_features(img));
        labels.extend_from_slice(mask.data());
    }
    Ok((features, labels))
}

/// Fits on every labeled pixel. `seed` is accepted for interface symmetry
/// with the bootstrap variant; the full-data fit is deterministic.
/// Indices of `count` pixels drawn without replacement out of `len`, in
/// ascending order; every pixel when `count >= len`.
pub fn annotated_pixels(len: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= len {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, len, count).into_vec();
    idx.sort_unstable();
    idx
}

pub fn fit_sim_learner(pairs: &[(Raster, Mask)], _seed: u64) -> Result<SimLearner> {
    let (features, labels) = training_rows(pairs)?;
    SimLearner::fit_features(&features, &labels)
}

/// Ten members, each fit on a with-replacement resample of the labeled
/// pixels (member `i` uses seed `seed + i`).
pub fn fit_sim_learner_bootstrap(pairs: &[(Raster, Mask)], seed: u64) -> Result<Vec<SimLearner>> {
    let (features, labels) = training_rows(pairs)?;
    bootstrap_features(&features, &labels, seed)
}

/// Bootstrap ensemble from precomputed feature rows.
pub fn bootstrap_features(features: &[[f64; 3]], labels: &[u8], seed: u64) -> Result<Vec<SimLearner>> {
    let n = features.len();
    let mut counts = vec![0u32; n];
    (0..BOOTSTRAP_MEMBERS as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            counts.fill(0);
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            SimLearner::fit_weighted(features, labels, |j| counts[j] as f64)
        })
        .collect()
}

pub fn predict_sim_learner(model: &SimLearner, image: &Raster) -> ProbMap {
    posterior_map(model, &pixel_features(image), image.width(), image.height())
}

/// Posterior map from precomputed `pixel_features` rows.
pub fn posterior_map(model: &SimLearner, features: &[[f64; 3]], width: usize, height: usize) -> ProbMap {
    let probs = features.iter().map(|f| model.posterior(f)).collect();
    ProbMap::new(width, height, probs).expect("posteriors lie in [0, 1]")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_window_features() {
        let img = Raster::from_fn(5, 5, |x, y| (x + 5 * y) as u8).unwrap();
        let f = pixel_features(&img);
        // center pixel sees the full image
        assert_eq!(f[12][0], 12.0);
        assert_eq!(f[12][1], 12.0);
        let var: f64 = (0..25).map(|v| (v as f64 - 12.0).powi(2)).sum::<f64>() / 25.0;
        assert!((f[12][2] - var.sqrt()).abs() < 1e-12);
        // corner sees a clipped 3x3 window: values {0,1,2,5,6,7,10,11,12}
        assert!((f[0][1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn separable_classes() {
        let truth = Mask::from_fn(20, 20, |x, y| (5..10).contains(&x) && (5..10).contains(&y)).unwrap();
        let img = Raster::from_fn(20, 20, |x, y| if truth.get(x, y) { 0 } else { 255 }).unwrap();
        let model = fit_sim_learner(&[(img.clone(), truth.clone())], 0).unwrap();
        assert_eq!(predict_sim_learner(&model, &img).to_mask(), truth);
    }

    #[test]
    fn symmetric_midpoint() {
        let unit = |m: f64| ClassModel { mean: [m, 0.0, 0.0], var: [1.0, 1.0, 1.0] };
        let model = SimLearner { classes: [unit(0.0), unit(4.0)], log_prior: [0.5f64.ln(), 0.5f64.ln()] };
        assert!((model.posterior(&[2.0, 0.0, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_six_pixels() {
        let feats = [
            [10.0, 12.0, 1.0],
            [14.0, 12.0, 3.0],
            [200.0, 190.0, 5.0],
            [210.0, 200.0, 7.0],
            [190.0, 195.0, 6.0],
            [220.0, 205.0, 2.0],
        ];
        let labels = [1, 1, 0, 0, 0, 0];
        let model = SimLearner::fit_features(&feats, &labels).unwrap();
        // defect: means (12, 12, 2), vars (4, 1e-6 floor, 1)
        assert_eq!(model.classes[1].mean, [12.0, 12.0, 2.0]);
        assert_eq!(model.classes[1].var, [4.0, VARIANCE_FLOOR, 1.0]);
        // background: means (205, 197.5, 5), vars (125, 31.25, 3.5)
        assert_eq!(model.classes[0].mean, [205.0, 197.5, 5.0]);
        for (got, want) in model.classes[0].var.iter().zip([125.0, 31.25, 3.5]) {
            assert!((got - want).abs() < 1e-9);
        }
        let gauss = |x: f64, m: f64, v: f64| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let x = [100.0, 100.0, 4.0];
        let l1 = (2.0 / 6.0) * gauss(x[0], 12.0, 4.0) * gauss(x[1], 12.0, 1e-6) * gauss(x[2], 2.0, 1.0);
        let l0 = (4.0 / 6.0) * gauss(x[0], 205.0, 125.0) * gauss(x[1], 197.5, 31.25) * gauss(x[2], 5.0, 3.5);
        // both underflow for this point; use a nearer one
        let _ = (l0, l1);
        let y = [15.0, 12.0, 2.5];
        let l1 = (2.0 / 6.0) * gauss(y[0], 12.0, 4.0) * gauss(y[1], 12.0, 1e-6) * gauss(y[2], 2.0, 1.0);
        let l0 = (4.0 / 6.0) * gauss(y[0], 205.0, 125.0) * gauss(y[1], 197.5, 31.25) * gauss(y[2], 5.0, 3.5);
        let want = l1 / (l0 + l1);
        assert!((model.posterior(&y) - want).abs() < 1e-12);
        let z = [180.0, 180.0, 4.0];
        let l1 = (2.0 / 6.0) * gauss(z[0], 12.0, 4.0) * gauss(z[1], 12.0, 1e-6) * gauss(z[2], 2.0, 1.0);
        let l0 = (4.0 / 6.0) * gauss(z[0], 205.0, 125.0) * gauss(z[1], 197.5, 31.25) * gauss(z[2], 5.0, 3.5);
        assert!((model.posterior(&z) - l1 / (l0 + l1)).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        let img = Raster::filled(4, 4, 100).unwrap();
        let mask = Mask::empty(4, 4).unwrap();
        assert!(matches!(fit_sim_learner(&[(img, mask)], 0), Err(Error::SingleClassTraining)));
    }

    #[test]
    fn bootstrap_members_differ_deterministically() {
        let truth = Mask::from_fn(16, 16, |x, y| x < 6 && y < 6).unwrap();
        let img = Raster::from_fn(16, 16, |x, y| if truth.get(x, y) { 40 + (x * y % 7) as u8 } else { 180 + ((x + y) % 11) as u8 }).unwrap();
        let pairs = [(img, truth)];
        let a = fit_sim_learner_bootstrap(&pairs, 5).unwrap();
        let b = fit_sim_learner_bootstrap(&pairs, 5).unwrap();
        assert_eq!(a.len(), BOOTSTRAP_MEMBERS);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }
}
