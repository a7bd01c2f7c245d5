//! The standard synthetic benchmark: a pool and a held-out test set of
//! micrographs drawn from four imaging regimes (bright polish, dark etch,
//! low contrast, overexposed and noisy), with per-image variation inside each
//! regime. Pool and test set each hold the regimes in proportion to their
//! weights.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{IMAGE_DIR, MASK_DIR};
use crate::raster::{save_grayscale, save_mask, Mask, Raster};
use crate::synthgen::{generate_micrograph, image_id, image_seed, SynthConfig};
use crate::ImageId;

/// Ranges are inclusive; each image draws its own values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub name: String,
    pub weight: f64,
    pub background_gray: [f64; 2],
    pub defect_gray: [f64; 2],
    pub noise_sigma: [f64; 2],
    pub gradient: [f64; 2],
    pub speckle_count: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub pool_size: usize,
    pub test_size: usize,
    pub image_size: usize,
    pub seed: u64,
    pub regimes: Vec<Regime>,
    /// Shape settings shared by every regime; gray levels, noise, gradient
    /// and speckles are overridden per image.
    pub shapes: SynthConfig,
}

fn regime(name: &str, weight: f64, bg: [f64; 2], defect: [f64; 2], noise: [f64; 2], gradient: [f64; 2], speckles: [usize; 2]) -> Regime {
    Regime {
        name: name.into(),
        weight,
        background_gray: bg,
        defect_gray: defect,
        noise_sigma: noise,
        gradient,
        speckle_count: speckles,
    }
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            pool_size: 80,
            test_size: 30,
            image_size: 128,
            seed: 0,
            regimes: vec![
                regime("bright", 0.25, [170.0, 200.0], [40.0, 80.0], [5.0, 10.0], [0.0, 30.0], [0, 0]),
                regime("dark", 0.25, [95.0, 120.0], [20.0, 45.0], [8.0, 14.0], [0.0, 20.0], [0, 4]),
                regime("low_contrast", 0.25, [130.0, 150.0], [85.0, 105.0], [6.0, 12.0], [0.0, 20.0], [0, 0]),
                regime("noisy", 0.25, [215.0, 235.0], [80.0, 110.0], [18.0, 28.0], [0.0, 40.0], [0, 6]),
            ],
            shapes: SynthConfig {
                width: 128,
                height: 128,
                pore_count: [1, 5],
                pore_radius: [4.0, 10.0],
                lof_count: [0, 2],
                lof_length: [24.0, 48.0],
                lof_width: [3.0, 7.0],
                lof_waviness: [1.0, 3.0],
                ..SynthConfig::default()
            },
        }
    }
}

/// Generated benchmark held in memory.
#[derive(Debug, Clone)]
pub struct BenchmarkData {
    pub images: BTreeMap<ImageId, Raster>,
    pub masks: BTreeMap<ImageId, Mask>,
    pub regime_of: BTreeMap<ImageId, usize>,
    pub pool_ids: Vec<ImageId>,
    pub test_ids: Vec<ImageId>,
}

fn draw(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] >= r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Regime index per image: counts proportional to the weights, with the
/// remainders going to the largest fractional parts (ties: lower index).
pub fn regime_quotas(regimes: &[Regime], n: usize) -> Vec<usize> {
    let total: f64 = regimes.iter().map(|r| r.weight).sum();
    let exact: Vec<f64> = regimes.iter().map(|r| r.weight / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..regimes.len()).collect();
    rest.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = n - counts.iter().sum::<usize>();
    for &k in rest.iter().take(short) {
        counts[k] += 1;
    }
    counts.iter().enumerate().flat_map(|(k, &c)| std::iter::repeat_n(k, c)).collect()
}

pub fn generate_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkData> {
    if cfg.regimes.is_empty() || cfg.regimes.iter().any(|r| !(r.weight > 0.0)) {
        return Err(Error::ConfigInfeasible("benchmark needs regimes with positive weights".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut data = BenchmarkData {
        images: BTreeMap::new(),
        masks: BTreeMap::new(),
        regime_of: BTreeMap::new(),
        pool_ids: Vec::new(),
        test_ids: Vec::new(),
    };
    // (regime, is_test), with quotas met separately in the pool and the test set
    let mut slots: Vec<(usize, bool)> = regime_quotas(&cfg.regimes, cfg.pool_size)
        .into_iter()
        .map(|k| (k, false))
        .chain(regime_quotas(&cfg.regimes, cfg.test_size).into_iter().map(|k| (k, true)))
        .collect();
    slots.shuffle(&mut rng);
    for (i, &(which, is_test)) in slots.iter().enumerate() {
        let reg = &cfg.regimes[which];
        let background = draw(&mut rng, reg.background_gray);
        let defect = draw(&mut rng, reg.defect_gray).min(background - 1.0);
        let speckles = rng.random_range(reg.speckle_count[0]..=reg.speckle_count[1]);
        let sc = SynthConfig {
            width: cfg.image_size,
            height: cfg.image_size,
            background_gray: background,
            defect_gray: defect,
            noise_sigma: draw(&mut rng, reg.noise_sigma),
            gradient: draw(&mut rng, reg.gradient),
            speckle_count: [speckles, speckles],
            speckle_gray: (background + defect) / 2.0,
            strata: Vec::new(),
            ..cfg.shapes.clone()
        };
        let id = image_id(i);
        let s = generate_micrograph(&sc, image_seed(cfg.seed, i), i)?;
        data.images.insert(id.clone(), s.image);
        data.masks.insert(id.clone(), s.mask);
        data.regime_of.insert(id.clone(), which);
        if is_test {
            data.test_ids.push(id);
        } else {
            data.pool_ids.push(id);
        }
    }
    Ok(data)
}

impl BenchmarkData {
    /// Writes `images/` and `masks/` (PNG) under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join(IMAGE_DIR))?;
        fs::create_dir_all(dir.join(MASK_DIR))?;
        for (id, img) in &self.images {
            save_grayscale(img, dir.join(IMAGE_DIR).join(format!("{id}.png")))?;
            save_mask(&self.masks[id], dir.join(MASK_DIR).join(format!("{id}.png")))?;
        }
        Ok(())
    }
}
