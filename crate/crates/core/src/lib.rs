//! Core-set selection and defect analytics for micrograph segmentation
//! campaigns.
//!
//! The numeric layers ([`embed`], [`select`], the coverage half of
//! [`metrics`]) are generic over [`Scalar`] (`f32`/`f64`); the aliases at the
//! crate root pin them to `f64`, which is what the CLI and the campaign
//! driver use.

pub mod bench;
pub mod campaign;
pub mod defects;
pub mod embed;
pub mod error;
pub mod features;
pub mod ledger;
pub mod linalg;
pub mod metrics;
pub mod raster;
pub mod scalar;
pub mod segment;
pub mod select;
pub mod synthgen;
pub mod table;

pub use error::{Error, Result};
pub use raster::{Mask, ProbMap, Raster};
pub use scalar::Scalar;

/// Image identifier (file stem).
pub type ImageId = String;

pub type FeatureMatrix = features::FeatureMatrix<f64>;
pub type EmbeddingSet = embed::EmbeddingSet<f64>;
pub type Clustering = embed::Clustering<f64>;
pub type ClusterSummary = select::ClusterSummary<f64>;
pub type LhsDesign = select::LhsDesign<f64>;
pub type CoverageReport = metrics::CoverageReport;

pub type FeatureMatrixF32 = features::FeatureMatrix<f32>;
pub type EmbeddingSetF32 = embed::EmbeddingSet<f32>;
pub type ClusteringF32 = embed::Clustering<f32>;
