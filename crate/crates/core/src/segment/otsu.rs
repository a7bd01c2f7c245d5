use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::raster::{Mask, Raster};

/// Which side of the threshold is defect.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// `pixel <= t` is defect.
    #[default]
    Dark,
    /// `pixel > t` is defect.
    Bright,
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "dark" => Ok(Polarity::Dark),
            "bright" => Ok(Polarity::Bright),
            other => Err(Error::InvalidInput(format!("unknown polarity {other:?}"))),
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Dark => "dark",
            Polarity::Bright => "bright",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuResult {
    pub threshold: u8,
    /// Between-class variance at `threshold`.
    pub between_variance: f64,
    /// Set when the histogram has a single occupied bin.
    pub degenerate: bool,
}

/// Exhaustive search over `t ∈ [0, 255]` for the maximal between-class
/// variance `w0·w1·(μ0 − μ1)²`, classes `≤ t` and `> t`. Ties go to the
/// smallest `t`.
pub fn otsu_threshold(image: &Raster) -> OtsuResult {
    let mut hist = [0u64; 256];
    for &v in image.data() {
        hist[v as usize] += 1;
    }
    let total = image.data().len() as u64;
    let occupied: Vec<usize> = (0..256).filter(|&v| hist[v] > 0).collect();
    if occupied.len() == 1 {
        return OtsuResult { threshold: occupied[0] as u8, between_variance: 0.0, degenerate: true };
    }
    let sum_all: u64 = (0..256).map(|v| v as u64 * hist[v]).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best = (0u8, -1.0f64);
    let nf = total as f64;
    for t in 0..256usize {
        n0 += hist[t];
        s0 += t as u64 * hist[t];
        let n1 = total - n0;
        let var = if n0 == 0 || n1 == 0 {
            0.0
        } else {
            // w0 w1 (μ0 − μ1)² = (N·S0 − n0·S)² / (n0·n1·N²), numerator exact in i128
            let diff = (total as i128) * (s0 as i128) - (n0 as i128) * (sum_all as i128);
            let num = (diff * diff) as f64;
            num / (n0 as f64 * n1 as f64 * nf * nf)
        };
        if var > best.1 {
            best = (t as u8, var);
        }
    }
    OtsuResult { threshold: best.0, between_variance: best.1, degenerate: false }
}

pub fn otsu_segment(image: &Raster, polarity: Polarity) -> Mask {
    let t = otsu_threshold(image).threshold;
    let data = image
        .data()
        .iter()
        .map(|&v| match polarity {
            Polarity::Dark => (v <= t) as u8,
            Polarity::Bright => (v > t) as u8,
        })
        .collect();
    Mask::new(image.width(), image.height(), data).expect("same dimensions as a valid raster")
}
