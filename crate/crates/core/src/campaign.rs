//! End-to-end active-learning campaigns with the simulated learner: embed
//! the pool once, then per round select, label (masks are already on disk),
//! retrain, and score the held-out test set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::{default_k_range, isomap, kmeans, pca, select_k, tsne, Clustering, EmbeddingSet, TsneConfig};
use crate::error::{Error, Result};
use crate::features::{extract_features, standardize, FeatureMatrix};
use crate::ledger::{commit_round, dataset_images, mask_path, sha256_hex, EmbeddingRecord, RoundManifest};
use crate::metrics::{macro_f1, pixel_confusion, sliced_wasserstein, MetricsReport, DEFAULT_PROJECTIONS};
use crate::raster::{load_grayscale, load_mask, Mask, Raster};
use crate::segment::{annotated_pixels, bootstrap_features, ensemble_uncertainty, pixel_features, posterior_map, SimLearner};
use crate::select::{random_select, smile_select, uncertainty_select, SelectionPlan, Strategy};
use crate::ImageId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMethod {
    #[default]
    Tsne,
    Pca,
    Isomap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub method: EmbedMethod,
    /// PCA width applied to the standardized features before t-SNE or
    /// Isomap, capped at `n − 1`.
    pub pca_dims: usize,
    /// `None` uses the t-SNE default for the pool size.
    pub perplexity: Option<f64>,
    pub iterations: usize,
    pub k_neighbors: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { method: EmbedMethod::Tsne, pca_dims: 50, perplexity: None, iterations: 1000, k_neighbors: 8 }
    }
}

/// Sparse point labels keep the simulated learner short of saturation
/// for the first few rounds.
pub const DEFAULT_ANNOTATED_PIXELS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub strategy: Strategy,
    pub rounds: usize,
    pub budget: usize,
    pub seed: u64,
    /// Fixed cluster count; `None` picks k by silhouette.
    pub k: Option<usize>,
    pub embed: EmbedConfig,
    pub projections: usize,
    /// Labeled pixels per training image; `None` trains on every pixel.
    pub annotated_pixels: Option<usize>,
    pub jobs: usize,
}

impl SimulateConfig {
    pub fn annotation(&self) -> Annotation {
        Annotation { pixels_per_image: self.annotated_pixels, seed: self.seed }
    }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Smile,
            rounds: 6,
            budget: 4,
            seed: 0,
            k: None,
            embed: EmbedConfig::default(),
            projections: DEFAULT_PROJECTIONS,
            annotated_pixels: Some(DEFAULT_ANNOTATED_PIXELS),
            jobs: 1,
        }
    }
}

/// Order-preserving map over up to `jobs` scoped worker threads.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

pub fn feature_matrix(images: &[(ImageId, &Raster)], jobs: usize) -> Result<FeatureMatrix<f64>> {
    let rows = par_map(images, jobs, |(id, img)| (id.clone(), extract_features(img)));
    FeatureMatrix::from_vectors(rows)
}

/// Standardize, reduce with PCA, then embed in 2-D with the configured
/// method.
pub fn embed_features(features: &FeatureMatrix<f64>, cfg: &EmbedConfig, seed: u64) -> Result<EmbeddingSet<f64>> {
    let n = features.len();
    let (z, _) = standardize(&features.values)?;
    let z = FeatureMatrix::new(features.ids.clone(), z)?;
    if cfg.method == EmbedMethod::Pca {
        return pca(&z, 2).map(|(e, _)| e);
    }
    let dims = cfg.pca_dims.min(n.saturating_sub(1)).min(z.dim()).max(2);
    let (reduced, _) = pca(&z, dims)?;
    let reduced = FeatureMatrix::new(reduced.ids, reduced.coords)?;
    match cfg.method {
        EmbedMethod::Tsne => {
            let mut tc = TsneConfig::for_points(n, seed);
            if let Some(p) = cfg.perplexity {
                tc.perplexity = p;
            }
            tc.iterations = cfg.iterations.max(tc.exaggeration_iters);
            tsne(&reduced, &tc)
        }
        EmbedMethod::Isomap => isomap(&reduced, cfg.k_neighbors, 2),
        EmbedMethod::Pca => unreachable!(),
    }
}

/// SHA-256 over `id,x,y` lines with coordinates at 17 significant digits.
pub fn embedding_hash(e: &EmbeddingSet<f64>) -> String {
    let mut s = String::new();
    for (id, row) in e.ids.iter().zip(e.coords.rows()) {
        s.push_str(id);
        for v in row {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    sha256_hex(s.as_bytes())
}

pub fn cluster_embedding(e: &EmbeddingSet<f64>, k: Option<usize>, seed: u64) -> Result<Clustering<f64>> {
    match k {
        Some(k) => kmeans(e, k, seed),
        None => {
            let (lo, hi) = default_k_range(e.len());
            select_k(e, lo, hi, seed)
        }
    }
}

/// Seed for round `round` of a campaign seeded with `seed`.
pub fn round_seed(seed: u64, round: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(round as u64)
}

/// Images, masks and cached pixel features of one dataset.
pub struct CampaignData {
    pub images: BTreeMap<ImageId, Raster>,
    pub masks: BTreeMap<ImageId, Mask>,
    pixel_rows: BTreeMap<ImageId, Vec<[f64; 3]>>,
}

/// Which pixels of a labeled image the learner trains on: `count` of them
/// drawn per image from a seed mixed from `seed` and the image id, or all
/// of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Annotation {
    pub pixels_per_image: Option<usize>,
    pub seed: u64,
}

impl Annotation {
    fn pixels(&self, id: &str, len: usize) -> Vec<usize> {
        match self.pixels_per_image {
            None => (0..len).collect(),
            Some(count) => {
                let id_seed = u64::from_le_bytes(Sha256::digest(id.as_bytes())[..8].try_into().expect("8 bytes"));
                annotated_pixels(len, count, id_seed ^ self.seed)
            }
        }
    }
}

impl CampaignData {
    pub fn new(images: BTreeMap<ImageId, Raster>, masks: BTreeMap<ImageId, Mask>, jobs: usize) -> Result<Self> {
        for (id, img) in &images {
            if let Some(m) = masks.get(id) {
                if (m.width(), m.height()) != (img.width(), img.height()) {
                    return Err(Error::DimensionMismatch(format!("mask of {id} does not match its image")));
                }
            }
        }
        let list: Vec<(&ImageId, &Raster)> = images.iter().collect();
        let rows = par_map(&list, jobs, |(id, img)| ((*id).clone(), pixel_features(img)));
        Ok(Self { images, masks, pixel_rows: rows.into_iter().collect() })
    }

    /// Every image under `images/`, and every mask under `masks/`.
    pub fn load(dataset_dir: &Path, jobs: usize) -> Result<Self> {
        let mut images = BTreeMap::new();
        let mut masks = BTreeMap::new();
        for (id, path) in dataset_images(dataset_dir)? {
            if let Some(mp) = mask_path(dataset_dir, &id) {
                masks.insert(id.clone(), load_mask(mp)?);
            }
            images.insert(id, load_grayscale(path)?);
        }
        Self::new(images, masks, jobs)
    }

    fn image(&self, id: &str) -> Result<&Raster> {
        self.images.get(id).ok_or_else(|| Error::MissingFile(id.to_string()))
    }

    fn mask(&self, id: &str) -> Result<&Mask> {
        self.masks.get(id).ok_or_else(|| Error::MissingFile(id.to_string()))
    }

    fn training_rows(&self, ids: &BTreeSet<ImageId>, annotation: &Annotation) -> Result<(Vec<[f64; 3]>, Vec<u8>)> {
        let mut f = Vec::new();
        let mut l = Vec::new();
        for id in ids {
            let rows = &self.pixel_rows[id.as_str()];
            let mask = self.mask(id)?.data();
            for i in annotation.pixels(id, rows.len()) {
                f.push(rows[i]);
                l.push(mask[i]);
            }
        }
        Ok((f, l))
    }

    fn predict(&self, model: Option<&SimLearner>, id: &str) -> Result<Mask> {
        let img = self.image(id)?;
        Ok(match model {
            Some(m) => posterior_map(m, &self.pixel_rows[id], img.width(), img.height()).to_mask(),
            None => Mask::empty(img.width(), img.height())?,
        })
    }

    /// Fits the learner on `labeled`; `None` when the labeled pixels hold a
    /// single class (or nothing is labeled).
    pub fn train(&self, labeled: &BTreeSet<ImageId>, annotation: &Annotation) -> Result<Option<SimLearner>> {
        if labeled.is_empty() {
            return Ok(None);
        }
        let (f, l) = self.training_rows(labeled, annotation)?;
        match SimLearner::fit_features(&f, &l) {
            Ok(m) => Ok(Some(m)),
            Err(Error::SingleClassTraining) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Test-set scores of `model`; without a model every pixel is
    /// predicted background.
    pub fn evaluate(&self, model: Option<&SimLearner>, test_ids: &[ImageId], jobs: usize) -> Result<MetricsReport> {
        let images = par_map(test_ids, jobs, |id| -> Result<_> {
            let mut m = macro_f1(pixel_confusion(&self.predict(model, id)?, self.mask(id)?)?);
            m.image_id = id.clone();
            Ok(m)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        MetricsReport::from_images(images)
    }

    /// Mean ensemble entropy of every candidate under a bootstrap ensemble
    /// fit on `labeled`; `None` when no ensemble can be fit.
    pub fn uncertainty_scores(
        &self,
        labeled: &BTreeSet<ImageId>,
        annotation: &Annotation,
        candidates: &[ImageId],
        seed: u64,
        jobs: usize,
    ) -> Result<Option<BTreeMap<ImageId, f64>>> {
        if labeled.is_empty() {
            return Ok(None);
        }
        let (f, l) = self.training_rows(labeled, annotation)?;
        let members = match bootstrap_features(&f, &l, seed) {
            Ok(m) => m,
            Err(Error::SingleClassTraining) => return Ok(None),
            Err(e) => return Err(e),
        };
        let scores = par_map(candidates, jobs, |id| -> Result<(ImageId, f64)> {
            let img = self.image(id)?;
            let maps: Vec<_> = members.iter().map(|m| posterior_map(m, &self.pixel_rows[id.as_str()], img.width(), img.height())).collect();
            Ok((id.clone(), ensemble_uncertainty(&maps)?.score))
        });
        scores.into_iter().collect::<Result<BTreeMap<_, _>>>().map(Some)
    }
}

/// Embedding and clustering of a campaign's pool.
pub struct PoolEmbedding {
    pub embedding: EmbeddingSet<f64>,
    pub clustering: Clustering<f64>,
}

pub fn embed_pool(data: &CampaignData, pool: &[ImageId], cfg: &SimulateConfig) -> Result<PoolEmbedding> {
    let list = pool.iter().map(|id| Ok((id.clone(), data.image(id)?))).collect::<Result<Vec<_>>>()?;
    let features = feature_matrix(&list, cfg.jobs)?;
    let embedding = embed_features(&features, &cfg.embed, cfg.seed)?;
    let clustering = cluster_embedding(&embedding, cfg.k, cfg.seed)?;
    Ok(PoolEmbedding { embedding, clustering })
}

/// Plan for `round` under `cfg.strategy`. Uncertainty falls back to a random
/// draw while no ensemble can be fit (nothing or one class labeled).
pub fn plan_round(
    data: &CampaignData,
    manifest: &RoundManifest,
    pool: &PoolEmbedding,
    cfg: &SimulateConfig,
    round: usize,
) -> Result<SelectionPlan> {
    let (budget, seed, jobs) = (cfg.budget, cfg.seed, cfg.jobs);
    let labeled = manifest.labeled();
    let rs = round_seed(seed, round);
    match cfg.strategy {
        Strategy::Smile => smile_select(&pool.embedding, &pool.clustering, &labeled, budget, round, rs),
        Strategy::Random => random_select(&manifest.pool_ids, &labeled, budget, round, rs),
        Strategy::Uncertainty => {
            let candidates: Vec<ImageId> = manifest.pool_ids.iter().filter(|id| !labeled.contains(*id)).cloned().collect();
            match data.uncertainty_scores(&labeled, &cfg.annotation(), &candidates, rs, jobs)? {
                Some(scores) => uncertainty_select(&manifest.pool_ids, &scores, &labeled, budget, round, rs),
                None => {
                    log::info!("round {round}: no ensemble yet, drawing at random");
                    random_select(&manifest.pool_ids, &labeled, budget, round, rs)
                }
            }
        }
    }
}

/// Runs `cfg.rounds` rounds on a round-0 manifest.
pub fn simulate(manifest: &RoundManifest, data: &CampaignData, cfg: &SimulateConfig) -> Result<RoundManifest> {
    if manifest.rounds.len() != 1 {
        return Err(Error::InvalidManifest("simulation starts from a round-0 manifest".into()));
    }
    let pool = embed_pool(data, &manifest.pool_ids, cfg)?;
    let mut m = manifest.clone();
    let resolved = serde_json::to_value(cfg)?;
    match m.config.as_object_mut() {
        Some(obj) => {
            obj.insert("simulate".into(), resolved);
        }
        None => m.config = serde_json::json!({ "simulate": resolved }),
    }
    m.embedding = Some(EmbeddingRecord {
        method: format!("{:?}", cfg.embed.method).to_lowercase(),
        hash: embedding_hash(&pool.embedding),
        config: serde_json::to_value(&cfg.embed)?,
    });
    for round in 1..=cfg.rounds {
        let plan = plan_round(data, &m, &pool, cfg, round)?;
        let mut labeled = m.labeled();
        labeled.extend(plan.ids());
        let model = data.train(&labeled, &cfg.annotation())?;
        let metrics = data.evaluate(model.as_ref(), &m.test_ids, cfg.jobs)?;
        let ids: Vec<ImageId> = labeled.iter().filter(|id| pool.embedding.index_of(id).is_some()).cloned().collect();
        let coverage = if ids.is_empty() {
            None
        } else {
            Some(sliced_wasserstein(&pool.embedding.subset(&ids)?, &pool.embedding, cfg.projections, &cfg.strategy.to_string())?)
        };
        m = commit_round(&m, plan, Some(metrics), coverage)?;
        log::info!(
            "round {round}: {} labeled, macro F1 {:.4}",
            m.labeled().len(),
            m.rounds.last().and_then(|r| r.metrics.as_ref()).map_or(0.0, |x| x.mean_macro_f1)
        );
    }
    Ok(m)
}

/// Fixed-width table of test macro F1 (mean ± population σ) per strategy
/// and round.
pub fn metrics_table(manifests: &[RoundManifest]) -> String {
    let rounds = manifests.iter().map(|m| m.rounds.len()).max().unwrap_or(0);
    let mut s = format!("{:<12}", "strategy");
    for r in 1..rounds {
        let _ = write!(s, " {:>17}", format!("round {r}"));
    }
    s.push('\n');
    for m in manifests {
        let _ = write!(s, "{:<12}", m.strategy.to_string());
        for r in m.rounds.iter().skip(1) {
            match &r.metrics {
                Some(x) => {
                    let _ = write!(s, " {:>17}", format!("{:.4} ± {:.4}", x.mean_macro_f1, x.std_macro_f1));
                }
                None => {
                    let _ = write!(s, " {:>17}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}
