//! Per-image feature vectors and column standardization.
//!
//! A feature vector is the concatenation of
//! 1. a 64×64 area-average downsample scaled to `[0, 1]` (4096 values),
//! 2. a 64-bin normalized intensity histogram (64 values),
//! 3. six global statistics: mean, population stdev, Shannon entropy (bits)
//!    of the 64-bin histogram, mean absolute horizontal and vertical
//!    gradient, and the Otsu dark-foreground fraction.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scalar::Scalar;
use crate::segment::otsu_threshold;
use crate::ImageId;

pub const DOWNSAMPLE_SIDE: usize = 64;
pub const HISTOGRAM_BINS: usize = 64;
pub const GLOBAL_STATS: usize = 6;
pub const FEATURE_DIM: usize = DOWNSAMPLE_SIDE * DOWNSAMPLE_SIDE + HISTOGRAM_BINS + GLOBAL_STATS;

/// Fixed-length description of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn downsample(&self) -> &[f64] {
        &self.values[..DOWNSAMPLE_SIDE * DOWNSAMPLE_SIDE]
    }

    pub fn histogram(&self) -> &[f64] {
        let start = DOWNSAMPLE_SIDE * DOWNSAMPLE_SIDE;
        &self.values[start..start + HISTOGRAM_BINS]
    }

    /// `[mean, stdev, entropy, grad_x, grad_y, otsu_fraction]`
    pub fn stats(&self) -> &[f64] {
        &self.values[FEATURE_DIM - GLOBAL_STATS..]
    }
}

/// Rows of features keyed by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    pub ids: Vec<ImageId>,
    pub values: Array2<T>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(ids: Vec<ImageId>, values: Array2<T>) -> Result<Self> {
        if ids.len() != values.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for {} rows",
                ids.len(),
                values.nrows()
            )));
        }
        let mut sorted = ids.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!("duplicate id {}", w[0])));
        }
        Ok(Self { ids, values })
    }

    pub fn from_vectors(rows: Vec<(ImageId, FeatureVector)>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.1.values.len());
        let mut values = Array2::zeros((n, d));
        let mut ids = Vec::with_capacity(n);
        for (i, (id, fv)) in rows.into_iter().enumerate() {
            if fv.values.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "feature length {} != {d}",
                    fv.values.len()
                )));
            }
            for (j, &v) in fv.values.iter().enumerate() {
                values[[i, j]] = T::of(v);
            }
            ids.push(id);
        }
        Self::new(ids, values)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats<T> {
    pub mean: Vec<T>,
    pub stdev: Vec<T>,
}

pub fn extract_features(image: &Raster) -> FeatureVector {
    let mut values = Vec::with_capacity(FEATURE_DIM);
    values.extend(area_downsample(image, DOWNSAMPLE_SIDE, DOWNSAMPLE_SIDE));

    let mut counts = [0usize; HISTOGRAM_BINS];
    for &v in image.data() {
        counts[v as usize * HISTOGRAM_BINS / 256] += 1;
    }
    let total = image.data().len() as f64;
    let histogram: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    values.extend_from_slice(&histogram);

    let mean = image.data().iter().map(|&v| v as f64).sum::<f64>() / total;
    let var = image
        .data()
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / total;
    let entropy = -histogram
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>();
    let (w, h) = (image.width(), image.height());
    let grad_x = if w > 1 {
        let mut s = 0.0;
        for y in 0..h {
            for x in 0..w - 1 {
                s += (image.get(x + 1, y) as f64 - image.get(x, y) as f64).abs();
            }
        }
        s / ((w - 1) * h) as f64
    } else {
        0.0
    };
    let grad_y = if h > 1 {
        let mut s = 0.0;
        for y in 0..h - 1 {
            for x in 0..w {
                s += (image.get(x, y + 1) as f64 - image.get(x, y) as f64).abs();
            }
        }
        s / (w * (h - 1)) as f64
    } else {
        0.0
    };
    let t = otsu_threshold(image).threshold;
    let foreground = image.data().iter().filter(|&&v| v <= t).count() as f64 / total;
    values.extend_from_slice(&[mean, var.sqrt(), entropy.max(0.0), grad_x, grad_y, foreground]);
    FeatureVector { values }
}

/// Box-filter resample: each target cell averages the exact source rectangle
/// it covers, weighting partially covered pixels by overlap. Output is
/// row-major and scaled to `[0, 1]`.
pub fn area_downsample(image: &Raster, out_w: usize, out_h: usize) -> Vec<f64> {
    let wx = overlap_weights(image.width(), out_w);
    let wy = overlap_weights(image.height(), out_h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for row in &wy {
        for col in &wx {
            let mut acc = 0.0;
            for &(sy, fy) in row {
                for &(sx, fx) in col {
                    acc += fy * fx * image.get(sx, sy) as f64;
                }
            }
            out.push(acc / 255.0);
        }
    }
    out
}

/// For each target cell, the source indices it overlaps and the normalized
/// overlap weight (weights per cell sum to 1).
fn overlap_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    // Work in units of 1/dst source pixels so cell edges are integers.
    (0..dst)
        .map(|j| {
            let lo = j * src;
            let hi = (j + 1) * src;
            let mut cell = Vec::new();
            for s in lo / dst..hi.div_ceil(dst) {
                let a = lo.max(s * dst);
                let b = hi.min((s + 1) * dst);
                if b > a {
                    cell.push((s, (b - a) as f64 / src as f64));
                }
            }
            cell
        })
        .collect()
}

/// Centers every column and scales non-constant columns to unit population
/// stdev. Constant columns come out as zeros.
pub fn standardize<T: Scalar>(matrix: &Array2<T>) -> Result<(Array2<T>, StandardizationStats<T>)> {
    let (n, d) = matrix.dim();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let nt = T::of_usize(n);
    let mut out = Array2::zeros((n, d));
    let mut mean = Vec::with_capacity(d);
    let mut stdev = Vec::with_capacity(d);
    for j in 0..d {
        let col = matrix.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            mean.push(first);
            stdev.push(T::zero());
            continue;
        }
        let m = col.iter().copied().sum::<T>() / nt;
        let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / nt;
        let s = var.sqrt();
        for i in 0..n {
            out[[i, j]] = (col[i] - m) / s;
        }
        mean.push(m);
        stdev.push(s);
    }
    Ok((out, StandardizationStats { mean, stdev }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn constant_image() {
        let f = extract_features(&Raster::filled(100, 37, 100).unwrap());
        assert_eq!(f.values.len(), FEATURE_DIM);
        for &v in f.downsample() {
            assert!((v - 100.0 / 255.0).abs() < 1e-12);
        }
        let hist = f.histogram();
        assert_eq!(hist[100 / 4], 1.0);
        assert_eq!(hist.iter().sum::<f64>(), 1.0);
        let s = f.stats();
        assert_eq!(s[0], 100.0);
        assert_eq!(s[1], 0.0);
        assert_eq!(s[2], 0.0);
        assert_eq!(s[3], 0.0);
        assert_eq!(s[4], 0.0);
    }

    #[test]
    fn identity_downsample() {
        let img = Raster::from_fn(64, 64, |x, y| (x * 3 + y) as u8).unwrap();
        let f = extract_features(&img);
        for (i, &v) in f.downsample().iter().enumerate() {
            assert_eq!(v, img.data()[i] as f64 / 255.0);
        }
    }

    #[test]
    fn checkerboard_stats() {
        let img = Raster::from_fn(64, 64, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 }).unwrap();
        let s = extract_features(&img).stats().to_vec();
        assert_eq!(s[0], 127.5);
        assert_eq!(s[1], 127.5);
        assert!((s[2] - 1.0).abs() < 1e-15);
        assert_eq!(s[3], 255.0);
        assert_eq!(s[4], 255.0);
        assert_eq!(s[5], 0.5);
    }

    #[test]
    fn downsample_partial_overlap() {
        // 3 source pixels onto 2 cells: cell 0 = p0 + p1/2, cell 1 = p1/2 + p2
        let img = Raster::new(3, 1, vec![0, 255, 51]).unwrap();
        let out = area_downsample(&img, 2, 1);
        assert!((out[0] - 127.5 / 1.5 / 255.0).abs() < 1e-12);
        assert!((out[1] - (127.5 + 51.0) / 1.5 / 255.0).abs() < 1e-12);
        // upsampling a single pixel replicates it
        let one = Raster::new(1, 1, vec![51]).unwrap();
        assert!(area_downsample(&one, 4, 4).iter().all(|&v| (v - 0.2).abs() < 1e-12));
    }

    #[test]
    fn standardize_examples() {
        let (z, stats) = standardize(&array![[1.0f64, 5.0], [3.0, 5.0]]).unwrap();
        assert_eq!(z, array![[-1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(stats.mean, vec![2.0, 5.0]);
        assert_eq!(stats.stdev, vec![1.0, 0.0]);
        let (z, _) = standardize(&array![[5.0f64], [5.0], [5.0]]).unwrap();
        assert_eq!(z, array![[0.0], [0.0], [0.0]]);
        assert!(matches!(
            standardize(&array![[1.0f64]]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn standardize_f32() {
        let (z, _) = standardize(&array![[1.0f32], [3.0]]).unwrap();
        assert_eq!(z, array![[-1.0f32], [1.0]]);
    }

    proptest! {
        #[test]
        fn standardized_columns(rows in 2usize..12, seed in any::<u64>()) {
            let mut s = seed | 1;
            let m = Array2::from_shape_fn((rows, 5), |(_, j)| {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                if j == 4 { 3.25 } else { (s % 10_000) as f64 / 100.0 - 50.0 }
            });
            let (z, _) = standardize(&m).unwrap();
            for j in 0..5 {
                let col = z.column(j);
                let mean = col.sum() / rows as f64;
                prop_assert!(mean.abs() < 1e-10);
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64).sqrt();
                if m.column(j).iter().any(|&v| v != m[[0, j]]) {
                    prop_assert!((sd - 1.0).abs() < 1e-10);
                } else {
                    prop_assert!(col.iter().all(|&v| v == 0.0));
                }
            }
            let (again, _) = standardize(&z).unwrap();
            for (a, b) in again.iter().zip(z.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
