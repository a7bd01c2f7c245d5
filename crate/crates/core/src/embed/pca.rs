use ndarray::{Array1, Array2, Axis};

use super::EmbeddingSet;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::{orient, symmetric_eigen};
use crate::scalar::Scalar;

/// Fitted principal components.
#[derive(Debug, Clone)]
pub struct Pca<T> {
    pub mean: Array1<T>,
    /// `out_dims × D`, one unit-norm component per row, descending variance.
    pub components: Array2<T>,
    /// Population variance captured by each component.
    pub variances: Array1<T>,
    pub explained_ratio: Array1<T>,
    /// Training data projected onto the components.
    pub scores: Array2<T>,
}

impl<T: Scalar> Pca<T> {
    /// Eigen-decomposes whichever of the `D×D` covariance or the `N×N` Gram
    /// matrix is smaller; both share their non-zero spectrum.
    pub fn fit(data: &Array2<T>, out_dims: usize) -> Result<Self> {
        let (n, d) = data.dim();
        if n < 2 {
            return Err(Error::DimensionError(format!("pca needs N >= 2, got {n}")));
        }
        if out_dims < 1 || out_dims > n.min(d) {
            return Err(Error::DimensionError(format!(
                "out_dims {out_dims} outside [1, {}]",
                n.min(d)
            )));
        }
        let nt = T::of_usize(n);
        let mean = data.mean_axis(Axis(0)).expect("non-empty");
        let centered = data - &mean;
        let total_var = centered.iter().map(|&v| v * v).sum::<T>() / nt;

        let mut components = Array2::zeros((out_dims, d));
        let mut variances = Array1::zeros(out_dims);
        if d <= n {
            let cov = centered.t().dot(&centered) / nt;
            let eig = symmetric_eigen(&cov);
            for c in 0..out_dims {
                variances[c] = eig.values[c].max(T::zero());
                components.row_mut(c).assign(&eig.vectors.column(c));
            }
        } else {
            let gram = centered.dot(&centered.t()) / nt;
            let eig = symmetric_eigen(&gram);
            for c in 0..out_dims {
                let lambda = eig.values[c].max(T::zero());
                variances[c] = lambda;
                let scale = (nt * lambda).sqrt();
                // rank-deficient directions carry no variance; leave them zero
                if scale > T::epsilon() * total_var.sqrt().max(T::one()) * T::of(1e3) {
                    let v = centered.t().dot(&eig.vectors.column(c)) / scale;
                    components.row_mut(c).assign(&v);
                }
            }
        }
        for c in 0..out_dims {
            orient(components.row_mut(c));
        }
        let explained_ratio = if total_var > T::zero() {
            variances.mapv(|v| v / total_var)
        } else {
            Array1::zeros(out_dims)
        };
        let scores = centered.dot(&components.t());
        Ok(Self { mean, components, variances, explained_ratio, scores })
    }

    /// Maps scores back into the centered input space.
    pub fn reconstruct_centered(&self) -> Array2<T> {
        self.scores.dot(&self.components)
    }
}

/// Projects onto the top `out_dims` principal components.
pub fn pca<T: Scalar>(matrix: &FeatureMatrix<T>, out_dims: usize) -> Result<(EmbeddingSet<T>, Vec<T>)> {
    let fit = Pca::fit(&matrix.values, out_dims)?;
    let ratios = fit.explained_ratio.to_vec();
    Ok((EmbeddingSet::new(matrix.ids.clone(), fit.scores)?, ratios))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("img{i}")).collect()
    }

    #[test]
    fn x_only_variance() {
        let m = FeatureMatrix::new(ids(3), array![[0.0f64, 1.0], [1.0, 1.0], [5.0, 1.0]]).unwrap();
        let (e, ratios) = pca(&m, 2).unwrap();
        assert!((ratios[0] - 1.0).abs() < 1e-12);
        assert!(ratios[1].abs() < 1e-12);
        let fit = Pca::fit(&m.values, 1).unwrap();
        assert!((fit.components[[0, 0]] - 1.0).abs() < 1e-12);
        assert_eq!(e.coords.ncols(), 2);
    }

    #[test]
    fn diagonal_line() {
        let m = FeatureMatrix::new(ids(3), array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        let (e, ratios) = pca(&m, 1).unwrap();
        let want = [-(2f64.sqrt()), 0.0, 2f64.sqrt()];
        for (got, w) in e.coords.column(0).iter().zip(want) {
            assert!((got - w).abs() < 1e-12, "{got} vs {w}");
        }
        assert!((ratios[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_reconstruction() {
        let data = array![
            [1.0f64, 2.0, 0.5],
            [0.3, -1.0, 2.0],
            [4.0, 0.0, 1.0],
            [2.0, 2.0, 2.0],
            [-1.0, 0.5, 0.0]
        ];
        let fit = Pca::fit(&data, 3).unwrap();
        let centered = &data - &fit.mean;
        for (a, b) in fit.reconstruct_centered().iter().zip(centered.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(fit.explained_ratio.sum() <= 1.0 + 1e-12);
    }

    #[test]
    fn wide_matrix_matches_tall_route() {
        // D > N goes through the Gram matrix; compare against the covariance route on the transpose-free data
        let data = array![[1.0f64, 0.0, 2.0, 3.0, 1.0], [0.0, 1.0, 1.0, 0.0, 2.0], [2.0, 2.0, 0.0, 1.0, 1.0]];
        let wide = Pca::fit(&data, 2).unwrap();
        let mean = data.mean_axis(Axis(0)).unwrap();
        let c = &data - &mean;
        let cov = c.t().dot(&c) / 3.0;
        let eig = symmetric_eigen(&cov);
        for k in 0..2 {
            assert!((wide.variances[k] - eig.values[k]).abs() < 1e-10);
            let dot: f64 = wide.components.row(k).dot(&eig.vectors.column(k));
            assert!((dot.abs() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_errors() {
        let m = FeatureMatrix::new(ids(2), array![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(pca(&m, 3), Err(Error::DimensionError(_))));
        assert!(matches!(pca(&m, 0), Err(Error::DimensionError(_))));
        let one = FeatureMatrix::new(ids(1), array![[0.0, 1.0]]).unwrap();
        assert!(matches!(pca(&one, 1), Err(Error::DimensionError(_))));
    }
}
