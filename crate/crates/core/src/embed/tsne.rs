//! Exact O(N²) t-SNE.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EmbeddingSet, Pca};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::pairwise_squared;
use crate::scalar::Scalar;

const ENTROPY_TOL: f64 = 1e-5;
const BISECTION_STEPS: usize = 200;
const DUPLICATE_JITTER: f64 = 1e-12;
const INIT_SCALE: f64 = 1e-4;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch: usize,
    pub seed: u64,
}

impl TsneConfig {
    /// Defaults for `n` points: perplexity `min(30, ⌊(n−1)/3⌋)`, 1000
    /// iterations, exaggeration 12 for 250 iterations, learning rate
    /// `max(n / 48, 50)`, momentum 0.5 → 0.8 at iteration 250.
    pub fn for_points(n: usize, seed: u64) -> Self {
        let perplexity = (n.saturating_sub(1) / 3).clamp(1, 30) as f64;
        Self {
            perplexity,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: (n as f64 / 48.0).max(50.0),
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch: 250,
            seed,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if n < 4 {
            return Err(Error::TooFewSamples { needed: 4, got: n });
        }
        if !(self.perplexity > 0.0) || self.perplexity > (n - 1) as f64 / 3.0 {
            return Err(Error::PerplexityTooLarge { perplexity: self.perplexity, n });
        }
        if self.iterations < self.exaggeration_iters {
            return Err(Error::InvalidInput(format!(
                "iterations {} shorter than exaggeration phase {}",
                self.iterations, self.exaggeration_iters
            )));
        }
        Ok(())
    }
}

/// Row-conditional Gaussian affinities with per-point precision.
#[derive(Debug, Clone)]
pub struct Affinities<T> {
    /// `p[[i, j]] = p(j | i)`, zero diagonal, rows sum to 1.
    pub conditional: Array2<T>,
    pub betas: Array1<T>,
    /// Achieved Shannon entropy of each row, in bits.
    pub entropies: Array1<T>,
}

/// Bisects each point's precision `β_i` so the entropy of `p(· | i)` equals
/// `log2(perplexity)`.
pub fn conditional_affinities<T: Scalar>(dist_sq: &Array2<T>, perplexity: f64) -> Affinities<T> {
    let n = dist_sq.nrows();
    let target = perplexity.log2();
    let ln2 = std::f64::consts::LN_2;
    let mut conditional = Array2::zeros((n, n));
    let mut betas = Array1::zeros(n);
    let mut entropies = Array1::zeros(n);
    let mut w = vec![T::zero(); n];

    for i in 0..n {
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| dist_sq[[i, j]])
            .fold(T::infinity(), T::min);
        let mean = (0..n)
            .filter(|&j| j != i)
            .map(|j| dist_sq[[i, j]] - dmin)
            .sum::<T>()
            / T::of_usize(n - 1);
        let mut beta = if mean > T::zero() { T::one() / mean } else { T::one() };
        let (mut lo, mut hi) = (T::zero(), T::infinity());
        let mut h = T::zero();
        for _ in 0..BISECTION_STEPS {
            // entropy in nats: ln Z + β E[d]
            let mut z = T::zero();
            let mut wd = T::zero();
            for j in 0..n {
                if j == i {
                    w[j] = T::zero();
                    continue;
                }
                let d = dist_sq[[i, j]] - dmin;
                w[j] = (-beta * d).exp();
                z = z + w[j];
                wd = wd + w[j] * d;
            }
            h = (z.ln() + beta * wd / z) / T::of(ln2);
            let diff = h.as_f64() - target;
            if diff.abs() <= ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_infinite() { beta * T::of(2.0) } else { (beta + hi) / T::of(2.0) };
            } else {
                hi = beta;
                beta = (beta + lo) / T::of(2.0);
            }
        }
        let z: T = w.iter().copied().sum();
        for j in 0..n {
            conditional[[i, j]] = w[j] / z;
        }
        betas[i] = beta;
        entropies[i] = h;
    }
    Affinities { conditional, betas, entropies }
}

/// `P = (P_cond + P_condᵀ) / 2N`: symmetric, non-negative, sums to 1.
pub fn joint_affinities<T: Scalar>(conditional: &Array2<T>) -> Array2<T> {
    let n = conditional.nrows();
    let denom = T::of_usize(2 * n);
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            p[[i, j]] = (conditional[[i, j]] + conditional[[j, i]]) / denom;
        }
    }
    p
}

fn student_t<T: Scalar>(y: &Array2<T>) -> (Array2<T>, T) {
    let n = y.nrows();
    let mut num = Array2::zeros((n, n));
    let mut sum = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[[i, 0]] - y[[j, 0]];
            let dy = y[[i, 1]] - y[[j, 1]];
            let v = T::one() / (T::one() + dx * dx + dy * dy);
            num[[i, j]] = v;
            num[[j, i]] = v;
            sum = sum + v + v;
        }
    }
    (num, sum)
}

/// KL(P ‖ Q) for the Student-t affinities of `y`.
pub fn kl_divergence<T: Scalar>(p: &Array2<T>, y: &Array2<T>) -> T {
    let (num, sum) = student_t(y);
    let n = p.nrows();
    let mut kl = T::zero();
    for i in 0..n {
        for j in 0..n {
            let pij = p[[i, j]];
            if i != j && pij > T::zero() {
                let q = (num[[i, j]] / sum).max(T::min_positive_value());
                kl = kl + pij * (pij / q).ln();
            }
        }
    }
    kl
}

/// Embedding together with the optimization diagnostics.
#[derive(Debug, Clone)]
pub struct TsneRun<T> {
    pub embedding: EmbeddingSet<T>,
    pub initial_kl: T,
    pub final_kl: T,
    pub entropies: Array1<T>,
    /// Rows that received duplicate-breaking jitter.
    pub jittered: Vec<usize>,
}

pub fn tsne<T: Scalar>(matrix: &FeatureMatrix<T>, config: &TsneConfig) -> Result<EmbeddingSet<T>> {
    tsne_run(matrix, config).map(|r| r.embedding)
}

pub fn tsne_run<T: Scalar>(matrix: &FeatureMatrix<T>, config: &TsneConfig) -> Result<TsneRun<T>> {
    let n = matrix.len();
    config.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut x = matrix.values.clone();
    let mut jittered = Vec::new();
    for i in 1..n {
        if (0..i).any(|k| x.row(k) == x.row(i)) {
            jittered.push(i);
        }
    }
    if jittered.len() == n - 1 {
        return Err(Error::DuplicatePointsDegenerate(format!("all {n} points are identical")));
    }
    for &i in &jittered {
        for v in x.row_mut(i) {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = *v + T::of(DUPLICATE_JITTER * g);
        }
    }

    let dist = pairwise_squared(&x);
    let aff = conditional_affinities(&dist, config.perplexity);
    let p = joint_affinities(&aff.conditional);

    let mut y = initial_layout(&x, &mut rng)?;
    let initial_kl = kl_divergence(&p, &y);

    let lr = T::of(config.learning_rate);
    let mut update = Array2::<T>::zeros((n, 2));
    let mut gains = Array2::<T>::from_elem((n, 2), T::one());
    let mut grad = Array2::<T>::zeros((n, 2));
    let four = T::of(4.0);
    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iters {
            T::of(config.exaggeration)
        } else {
            T::one()
        };
        let momentum = T::of(if iter < config.momentum_switch {
            config.momentum_initial
        } else {
            config.momentum_final
        });
        let (num, sum) = student_t(&y);
        grad.fill(T::zero());
        for i in 0..n {
            let (mut gx, mut gy) = (T::zero(), T::zero());
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[[i, j]] / sum;
                let m = (exaggeration * p[[i, j]] - q) * num[[i, j]];
                gx = gx + m * (y[[i, 0]] - y[[j, 0]]);
                gy = gy + m * (y[[i, 1]] - y[[j, 1]]);
            }
            grad[[i, 0]] = four * gx;
            grad[[i, 1]] = four * gy;
        }
        for k in 0..n * 2 {
            let (i, d) = (k / 2, k % 2);
            let g = grad[[i, d]];
            let gain = if update[[i, d]] * g < T::zero() {
                gains[[i, d]] + T::of(0.2)
            } else {
                gains[[i, d]] * T::of(0.8)
            };
            gains[[i, d]] = gain.max(T::of(MIN_GAIN));
            update[[i, d]] = momentum * update[[i, d]] - lr * gains[[i, d]] * g;
            y[[i, d]] = y[[i, d]] + update[[i, d]];
        }
        for d in 0..2 {
            let mean = y.column(d).sum() / T::of_usize(n);
            y.column_mut(d).mapv_inplace(|v| v - mean);
        }
    }
    let final_kl = kl_divergence(&p, &y);
    Ok(TsneRun {
        embedding: EmbeddingSet::new(matrix.ids.clone(), y)?,
        initial_kl,
        final_kl,
        entropies: aff.entropies,
        jittered,
    })
}

/// 2-D PCA scaled so the first coordinate has stdev 1e-4; axes without
/// variance are filled with seeded Gaussian noise of the same scale.
fn initial_layout<T: Scalar>(x: &Array2<T>, rng: &mut ChaCha8Rng) -> Result<Array2<T>> {
    let (n, d) = x.dim();
    let dims = d.min(2);
    let fit = Pca::fit(x, dims)?;
    let mut y = Array2::zeros((n, 2));
    for c in 0..dims {
        y.column_mut(c).assign(&fit.scores.column(c));
    }
    let sd0 = {
        let col = y.column(0);
        let m = col.sum() / T::of_usize(n);
        (col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::of_usize(n)).sqrt()
    };
    let scale = if sd0 > T::zero() { T::of(INIT_SCALE) / sd0 } else { T::zero() };
    y.mapv_inplace(|v| v * scale);
    for c in 0..2 {
        if y.column(c).iter().all(|&v| v == T::zero()) {
            for v in y.column_mut(c) {
                let g: f64 = StandardNormal.sample(rng);
                *v = T::of(INIT_SCALE * g);
            }
        }
    }
    Ok(y)
}
