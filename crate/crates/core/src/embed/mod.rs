//! Dimensionality reduction (PCA, exact t-SNE, Isomap) and k-means
//! clustering with silhouette-based model selection.

mod cluster;
mod isomap;
mod pca;
mod plot;
mod tsne;

pub use cluster::{
    default_k_range, kmeans, select_k, silhouette, silhouette_samples, Clustering, KMEANS_MAX_ITER,
    KMEANS_RESTARTS,
};
pub use isomap::{classical_mds, geodesic_distances, isomap, knn_graph, Graph};
pub use pca::{pca, Pca};
pub use plot::embedding_svg;
pub use tsne::{
    conditional_affinities, joint_affinities, kl_divergence, tsne, tsne_run, Affinities, TsneConfig,
    TsneRun,
};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::ImageId;

/// Per-image coordinates in a low-dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T> {
    pub ids: Vec<ImageId>,
    pub coords: Array2<T>,
}

impl<T: Scalar> EmbeddingSet<T> {
    pub fn new(ids: Vec<ImageId>, coords: Array2<T>) -> Result<Self> {
        if ids.len() != coords.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for {} rows",
                ids.len(),
                coords.nrows()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite embedding coordinate".into()));
        }
        let mut sorted: Vec<&ImageId> = ids.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!("duplicate id {}", w[0])));
        }
        Ok(Self { ids, coords })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Rows for the given ids, in the given order.
    pub fn subset(&self, ids: &[ImageId]) -> Result<Self> {
        let mut coords = Array2::zeros((ids.len(), self.dim()));
        for (r, id) in ids.iter().enumerate() {
            let i = self
                .index_of(id)
                .ok_or_else(|| Error::SubsetNotContained(id.clone()))?;
            coords.row_mut(r).assign(&self.coords.row(i));
        }
        Self::new(ids.to_vec(), coords)
    }

    pub fn map_coords(&self, f: impl Fn(T) -> T) -> Self {
        Self { ids: self.ids.clone(), coords: self.coords.mapv(f) }
    }
}
