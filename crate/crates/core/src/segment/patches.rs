use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};

/// The eight symmetries of the square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dihedral {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipX,
    FlipY,
    Transpose,
    AntiTranspose,
}

impl Dihedral {
    pub const ALL: [Dihedral; 8] = [
        Dihedral::Identity,
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
        Dihedral::FlipX,
        Dihedral::FlipY,
        Dihedral::Transpose,
        Dihedral::AntiTranspose,
    ];

    /// Source coordinate read by output pixel `(x, y)` of an `n×n` grid.
    fn source(self, x: usize, y: usize, n: usize) -> (usize, usize) {
        let m = n - 1;
        match self {
            Dihedral::Identity => (x, y),
            Dihedral::Rot90 => (y, m - x),
            Dihedral::Rot180 => (m - x, m - y),
            Dihedral::Rot270 => (m - y, x),
            Dihedral::FlipX => (m - x, y),
            Dihedral::FlipY => (x, m - y),
            Dihedral::Transpose => (y, x),
            Dihedral::AntiTranspose => (m - y, m - x),
        }
    }

    /// Applies the transform to a square row-major grid of side `n`.
    pub fn apply<P: Copy>(self, data: &[P], n: usize) -> Vec<P> {
        assert_eq!(data.len(), n * n, "grid must be square");
        let mut out = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                let (sx, sy) = self.source(x, y, n);
                out.push(data[sy * n + sx]);
            }
        }
        out
    }

    pub fn apply_raster(self, r: &Raster) -> Raster {
        Raster::new(r.width(), r.height(), self.apply(r.data(), r.width())).expect("same shape")
    }

    pub fn apply_mask(self, m: &Mask) -> Mask {
        Mask::new(m.width(), m.height(), self.apply(m.data(), m.width())).expect("same shape")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPatch {
    /// Top-left corner of the crop in the source image.
    pub x: usize,
    pub y: usize,
    pub transform: Dihedral,
    pub image: Raster,
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub patches: Vec<TrainingPatch>,
    /// Indices into `patches`.
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Fraction of patches assigned to the training split.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Uniform random `size×size` crops, each augmented by a uniformly drawn
/// dihedral transform unless `augment` is false, with a seeded 80/20 split.
pub fn sample_training_patches(
    image: &Raster,
    mask: &Mask,
    count: usize,
    size: usize,
    seed: u64,
    augment: bool,
) -> Result<PatchSet> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    if size == 0 || image.width() < size || image.height() < size {
        return Err(Error::ImageTooSmall { width: image.width(), height: image.height(), size });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patches = Vec::with_capacity(count);
    for _ in 0..count {
        let x = rng.random_range(0..=image.width() - size);
        let y = rng.random_range(0..=image.height() - size);
        let transform = if augment { Dihedral::ALL[rng.random_range(0..8)] } else { Dihedral::Identity };
        patches.push(TrainingPatch {
            x,
            y,
            transform,
            image: transform.apply_raster(&image.crop(x, y, size, size)?),
            mask: transform.apply_mask(&mask.crop(x, y, size, size)?),
        });
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut rng);
    let n_train = (count as f64 * TRAIN_FRACTION).round() as usize;
    let mut train = order[..n_train].to_vec();
    let mut validation = order[n_train..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    Ok(PatchSet { patches, train, validation })
}
