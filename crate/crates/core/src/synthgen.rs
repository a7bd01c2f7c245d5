//! Seeded synthetic micrographs with exact ground truth.
//!
//! Pores are filled ellipses (axis ratio 0.8–1). Lack-of-fusion voids are
//! long, thin, wavy bands (axis ratio at most 0.3). Shapes are placed
//! without overlap on a gray matrix with an optional illumination gradient,
//! faint non-defect speckles, and additive Gaussian noise.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::defects::{extract_instances, label_components, write_conditions, BBox, DefectClass, ProcessCondition};
use crate::error::{Error, Result};
use crate::raster::{save_grayscale, save_mask, Mask, Raster};
use crate::ImageId;

const PLACEMENT_TRIES: usize = 500;
const SHAPE_GAP: f64 = 3.0;
const MAX_LOF_RATIO: f64 = 0.3;

/// One process condition and, optionally, its own defect counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub power_w: f64,
    pub speed_mm_s: f64,
    #[serde(default)]
    pub pore_count: Option<[usize; 2]>,
    #[serde(default)]
    pub lof_count: Option<[usize; 2]>,
}

/// All ranges are inclusive `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub background_gray: f64,
    pub noise_sigma: f64,
    /// Peak-to-peak illumination change across the image.
    pub gradient: f64,
    pub defect_gray: f64,
    pub pore_count: [usize; 2],
    pub pore_radius: [f64; 2],
    pub lof_count: [usize; 2],
    pub lof_length: [f64; 2],
    pub lof_width: [f64; 2],
    /// Amplitude of the centerline wave, in pixels.
    pub lof_waviness: [f64; 2],
    /// Small dark spots that are not defects.
    pub speckle_count: [usize; 2],
    pub speckle_gray: f64,
    pub seed: u64,
    pub strata: Vec<Stratum>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            background_gray: 170.0,
            noise_sigma: 8.0,
            gradient: 0.0,
            defect_gray: 50.0,
            pore_count: [2, 6],
            pore_radius: [8.0, 16.0],
            lof_count: [0, 3],
            lof_length: [40.0, 80.0],
            lof_width: [5.0, 9.0],
            lof_waviness: [1.0, 4.0],
            speckle_count: [0, 0],
            speckle_gray: 120.0,
            seed: 0,
            strata: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Pore { cx: f64, cy: f64, a: f64, b: f64, angle: f64 },
    Lof { cx: f64, cy: f64, length: f64, width: f64, angle: f64, amplitude: f64, cycles: f64, phase: f64 },
}

impl Shape {
    pub fn class(&self) -> DefectClass {
        match self {
            Shape::Pore { .. } => DefectClass::Porosity,
            Shape::Lof { .. } => DefectClass::LackOfFusion,
        }
    }

    fn center(&self) -> (f64, f64) {
        match *self {
            Shape::Pore { cx, cy, .. } | Shape::Lof { cx, cy, .. } => (cx, cy),
        }
    }

    /// Radius of a disk around the center containing the shape.
    fn reach(&self) -> f64 {
        match *self {
            Shape::Pore { a, b, .. } => a.max(b),
            Shape::Lof { length, width, amplitude, .. } => {
                let half = length / 2.0;
                let across = amplitude + (width / 2.0).max(1.0);
                (half * half + across * across).sqrt()
            }
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Pore { cx, cy, a, b, angle } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            }
            Shape::Lof { cx, cy, length, width, angle, amplitude, cycles, phase } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                let half = length / 2.0;
                if u.abs() > half {
                    return false;
                }
                let t = u / half;
                let center = amplitude * (PI * cycles * t + phase).sin();
                // thin toward the tips, never under one pixel wide
                let hw = (width / 2.0 * (1.0 - t * t).sqrt()).max(1.0);
                (v - center).abs() <= hw
            }
        }
    }

    fn render(&self, w: usize, h: usize, mut paint: impl FnMut(usize, usize)) {
        let (cx, cy) = self.center();
        let r = self.reach() + 1.0;
        let x0 = (cx - r).floor().max(0.0) as usize;
        let y0 = (cy - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil() as usize).min(w - 1);
        let y1 = ((cy + r).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.contains(x as f64, y as f64) {
                    paint(x, y);
                }
            }
        }
    }
}

/// Ground truth for one connected defect region of the mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthInstance {
    /// Matches the id `extract_instances` assigns on the mask.
    pub id: usize,
    pub class: DefectClass,
    pub area: usize,
    pub bbox: BBox,
    /// Indices into `SynthImage::shapes` merged into this region.
    pub shapes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    pub image: Raster,
    pub mask: Mask,
    pub shapes: Vec<Shape>,
    pub truth: Vec<TruthInstance>,
    /// Pixel area rendered by each shape.
    pub shape_areas: Vec<usize>,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInfeasible(msg));
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive".into());
        }
        if !(self.defect_gray < self.background_gray) {
            return bad(format!("defect gray {} must be below background gray {}", self.defect_gray, self.background_gray));
        }
        if !(self.noise_sigma >= 0.0) || !(self.gradient >= 0.0) {
            return bad("noise and gradient must be non-negative".into());
        }
        for (name, r) in [("pore_count", self.pore_count), ("lof_count", self.lof_count), ("speckle_count", self.speckle_count)] {
            if r[0] > r[1] {
                return bad(format!("{name} range {r:?} is empty"));
            }
        }
        for (name, r) in [
            ("pore_radius", self.pore_radius),
            ("lof_length", self.lof_length),
            ("lof_width", self.lof_width),
            ("lof_waviness", self.lof_waviness),
        ] {
            if !(r[0] <= r[1]) || r[0] < 0.0 {
                return bad(format!("{name} range {r:?} is empty"));
            }
        }
        if self.pore_radius[0] <= 0.0 || self.lof_length[0] <= 0.0 || self.lof_width[0] <= 0.0 {
            return bad("shape sizes must be positive".into());
        }
        let needs_lof = self.lof_count[1] > 0 || self.strata.iter().any(|s| s.lof_count.is_some_and(|c| c[1] > 0));
        if needs_lof && self.lof_width[1] / self.lof_length[0] > MAX_LOF_RATIO {
            return bad(format!("lack-of-fusion axis ratio may exceed {MAX_LOF_RATIO}"));
        }
        let side = self.width.min(self.height) as f64;
        if 2.0 * self.pore_radius[1] + 2.0 > side || (needs_lof && self.lof_length[1] + 2.0 > side) {
            return bad(format!("shapes do not fit in {}x{}", self.width, self.height));
        }
        for s in &self.strata {
            ProcessCondition::new(s.power_w, s.speed_mm_s)?;
        }
        Ok(())
    }

    fn stratum(&self, index: usize) -> Option<&Stratum> {
        if self.strata.is_empty() {
            None
        } else {
            Some(&self.strata[index % self.strata.len()])
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

fn place(rng: &mut ChaCha8Rng, cfg: &SynthConfig, placed: &[Shape], make: impl Fn(f64, f64) -> Shape) -> Result<Shape> {
    for _ in 0..PLACEMENT_TRIES {
        let probe = make(0.0, 0.0);
        let r = probe.reach() + 1.0;
        let (w, h) = (cfg.width as f64, cfg.height as f64);
        if 2.0 * r >= w || 2.0 * r >= h {
            break;
        }
        let cx = rng.random_range(r..w - r);
        let cy = rng.random_range(r..h - r);
        let shape = make(cx, cy);
        let clear = placed.iter().all(|p| {
            let (px, py) = p.center();
            ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() > p.reach() + shape.reach() + SHAPE_GAP
        });
        if clear {
            return Ok(shape);
        }
    }
    Err(Error::ConfigInfeasible(format!(
        "could not place {} shapes without overlap in {}x{}",
        placed.len() + 1,
        cfg.width,
        cfg.height
    )))
}

/// One micrograph for stratum `index % strata.len()`; deterministic in
/// `(config, seed, index)`.
pub fn generate_micrograph(config: &SynthConfig, seed: u64, index: usize) -> Result<SynthImage> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stratum = config.stratum(index);
    let pore_range = stratum.and_then(|s| s.pore_count).unwrap_or(config.pore_count);
    let lof_range = stratum.and_then(|s| s.lof_count).unwrap_or(config.lof_count);
    let n_pores = rng.random_range(pore_range[0]..=pore_range[1]);
    let n_lof = rng.random_range(lof_range[0]..=lof_range[1]);

    let mut shapes: Vec<Shape> = Vec::with_capacity(n_pores + n_lof);
    // larger shapes first so they still find room
    for _ in 0..n_lof {
        let length = uniform(&mut rng, config.lof_length);
        let width = uniform(&mut rng, config.lof_width).min(MAX_LOF_RATIO * length);
        let angle = rng.random_range(0.0..PI);
        let amplitude = uniform(&mut rng, config.lof_waviness);
        let cycles = rng.random_range(1.0..2.5);
        let phase = rng.random_range(0.0..2.0 * PI);
        let s = place(&mut rng, config, &shapes, |cx, cy| Shape::Lof { cx, cy, length, width, angle, amplitude, cycles, phase })?;
        shapes.push(s);
    }
    for _ in 0..n_pores {
        let a = uniform(&mut rng, config.pore_radius);
        let b = a * rng.random_range(0.8..=1.0);
        let angle = rng.random_range(0.0..PI);
        let s = place(&mut rng, config, &shapes, |cx, cy| Shape::Pore { cx, cy, a, b, angle })?;
        shapes.push(s);
    }

    let (w, h) = (config.width, config.height);
    // owner[p] = 1 + index of the last shape painting pixel p
    let mut owner = vec![0usize; w * h];
    for (k, s) in shapes.iter().enumerate() {
        s.render(w, h, |x, y| owner[y * w + x] = k + 1);
    }
    let mut shape_areas = vec![0usize; shapes.len()];
    for &o in &owner {
        if o > 0 {
            shape_areas[o - 1] += 1;
        }
    }

    let mut speckle = vec![false; w * h];
    let n_speckles = rng.random_range(config.speckle_count[0]..=config.speckle_count[1]);
    for _ in 0..n_speckles {
        let r = rng.random_range(1.0..3.0);
        let s = Shape::Pore { cx: rng.random_range(0.0..w as f64), cy: rng.random_range(0.0..h as f64), a: r, b: r, angle: 0.0 };
        s.render(w, h, |x, y| speckle[y * w + x] = true);
    }

    let theta = rng.random_range(0.0..2.0 * PI);
    let (gx, gy) = (theta.cos(), theta.sin());
    let diag = ((w * w + h * h) as f64).sqrt();
    let noise = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let shade = config.gradient * ((x as f64 - w as f64 / 2.0) * gx + (y as f64 - h as f64 / 2.0) * gy) / diag;
            let base = if owner[p] > 0 {
                config.defect_gray
            } else if speckle[p] {
                config.speckle_gray + shade
            } else {
                config.background_gray + shade
            };
            let n = if config.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            data.push((base + n).round().clamp(0.0, 255.0) as u8);
        }
    }
    let image = Raster::new(w, h, data)?;
    let mask = Mask::new(w, h, owner.iter().map(|&o| (o > 0) as u8).collect())?;

    let (labels, _) = label_components(&mask);
    let truth = extract_instances(&mask)
        .into_iter()
        .map(|inst| {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for (p, &l) in labels.iter().enumerate() {
                if l as usize == inst.id {
                    *counts.entry(owner[p] - 1).or_default() += 1;
                }
            }
            let largest = counts
                .keys()
                .copied()
                .max_by(|&a, &b| shape_areas[a].cmp(&shape_areas[b]).then(b.cmp(&a)))
                .expect("component has pixels");
            TruthInstance {
                id: inst.id,
                class: shapes[largest].class(),
                area: inst.area,
                bbox: inst.bbox,
                shapes: counts.into_keys().collect(),
            }
        })
        .collect();
    Ok(SynthImage { image, mask, shapes, truth, shape_areas })
}

/// Seed used for image `index` of a dataset generated from `seed`.
pub fn image_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

pub fn image_id(index: usize) -> ImageId {
    format!("img{index:04}")
}

#[derive(Debug, Serialize)]
struct TruthRow<'a> {
    image_id: &'a str,
    instance_id: usize,
    area: usize,
    bbox_x: usize,
    bbox_y: usize,
    bbox_w: usize,
    bbox_h: usize,
    class: DefectClass,
}

/// Writes `images/`, `masks/`, `instances.csv` and `conditions.csv` under
/// `out` for `count` micrographs, returning their ids.
pub fn generate_dataset(config: &SynthConfig, count: usize, out: &Path) -> Result<Vec<ImageId>> {
    config.validate()?;
    fs::create_dir_all(out.join("images"))?;
    fs::create_dir_all(out.join("masks"))?;
    let mut truth_csv = csv::Writer::from_path(out.join("instances.csv"))?;
    let mut conditions = BTreeMap::new();
    let mut ids = Vec::with_capacity(count);
    for i in 0..count {
        let id = image_id(i);
        let s = generate_micrograph(config, image_seed(config.seed, i), i)?;
        save_grayscale(&s.image, out.join("images").join(format!("{id}.png")))?;
        save_mask(&s.mask, out.join("masks").join(format!("{id}.png")))?;
        for t in &s.truth {
            truth_csv.serialize(TruthRow {
                image_id: &id,
                instance_id: t.id,
                area: t.area,
                bbox_x: t.bbox.x,
                bbox_y: t.bbox.y,
                bbox_w: t.bbox.w,
                bbox_h: t.bbox.h,
                class: t.class,
            })?;
        }
        let cond = match config.stratum(i) {
            Some(st) => ProcessCondition::new(st.power_w, st.speed_mm_s)?,
            None => ProcessCondition::new(200.0, 1000.0)?,
        };
        conditions.insert(id.clone(), cond);
        ids.push(id);
    }
    truth_csv.flush()?;
    write_conditions(out.join("conditions.csv"), &conditions)?;
    Ok(ids)
}
