use crate::error::{Error, Result};
use crate::raster::ProbMap;

/// Per-pixel binary entropy of the ensemble mean, plus its image mean.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub width: usize,
    pub height: usize,
    /// Entropy in bits, `[0, 1]`.
    pub entropy: Vec<f64>,
    pub score: f64,
}

/// `H(p) = −p log2 p − (1−p) log2(1−p)`, with `0 · log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    (term(p) + term(1.0 - p)).clamp(0.0, 1.0)
}

/// Ensemble disagreement: entropy of the per-pixel mean probability. Member
/// values are summed in sorted order so the result does not depend on the
/// order of `maps`.
pub fn ensemble_uncertainty(maps: &[ProbMap]) -> Result<UncertaintyMap> {
    if maps.len() < 2 {
        return Err(Error::InvalidInput(format!("ensemble needs at least 2 maps, got {}", maps.len())));
    }
    let (w, h) = (maps[0].width(), maps[0].height());
    if let Some(m) = maps.iter().find(|m| m.width() != w || m.height() != h) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} map in a {w}x{h} ensemble",
            m.width(),
            m.height()
        )));
    }
    let k = maps.len() as f64;
    let mut vals = vec![0.0; maps.len()];
    let entropy: Vec<f64> = (0..w * h)
        .map(|i| {
            for (v, m) in vals.iter_mut().zip(maps) {
                *v = m.data()[i];
            }
            vals.sort_by(f64::total_cmp);
            binary_entropy(vals.iter().sum::<f64>() / k)
        })
        .collect();
    let score = entropy.iter().sum::<f64>() / entropy.len() as f64;
    Ok(UncertaintyMap { width: w, height: h, entropy, score })
}
