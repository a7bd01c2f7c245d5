use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use corekit::bench::{generate_benchmark, BenchmarkConfig};
use corekit::campaign::{
    cluster_embedding, embed_features, feature_matrix, metrics_table, par_map, simulate, CampaignData, EmbedConfig,
    EmbedMethod, SimulateConfig, DEFAULT_ANNOTATED_PIXELS,
};
use corekit::defects::{
    apply_labels, classify_all, defect_stats, emit_process_map, extract_instances, extract_patch, patch_window,
    read_conditions, read_instances, read_labels, read_stats, write_instances, write_stats, aggregate_by_condition,
    DEFAULT_CIRCULARITY_THRESHOLD,
};
use corekit::embed::{embedding_svg, silhouette};
use corekit::ledger::{commit_round, images_in, init_campaign, load_manifest, resolve_dataset_dir, save_manifest, to_canonical_json, RoundManifest};
use corekit::metrics::{evaluate, sliced_wasserstein, CoverageReport, MetricsReport, DEFAULT_PROJECTIONS};
use corekit::raster::{load_grayscale, load_mask, load_probmap, save_grayscale, save_mask};
use corekit::segment::{ensemble_uncertainty, otsu_segment, otsu_threshold, Polarity};
use corekit::select::{cluster_spread, random_select, smile_select, uncertainty_select, SelectionPlan, Strategy};
use corekit::synthgen::{generate_dataset, SynthConfig};
use corekit::table::{
    read_clustering, read_embedding, read_feature_matrix, read_ids, read_scores, write_clustering, write_embedding,
    write_feature_matrix, write_ids, write_scores,
};
use corekit::{Error, ImageId};

const SEED_ENV: &str = "COREKIT_SEED";
const MANIFEST_FILE: &str = "campaign.json";
const CONFIG_FILE: &str = "config.json";

#[derive(Parser)]
#[command(name = "corekit", version, about = "Core-set selection, segmentation baselines and defect analytics for micrograph datasets")]
struct Cli {
    /// Worker threads for per-image stages.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-image feature vectors.
    #[command(subcommand)]
    Features(FeaturesCmd),
    /// 2-D embeddings and their plots.
    #[command(subcommand)]
    Embed(EmbedCmd),
    /// k-means on an embedding, k fixed or chosen by silhouette.
    Cluster(ClusterArgs),
    /// Selection plans for the next labeling round.
    #[command(subcommand)]
    Select(SelectCmd),
    /// Training-free segmentation.
    #[command(subcommand)]
    Segment(SegmentCmd),
    /// Ensemble disagreement scores.
    #[command(subcommand)]
    Uncertainty(UncertaintyCmd),
    /// Segmentation scores and embedding coverage.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Defect instances, patches, classes and process statistics.
    #[command(subcommand)]
    Defects(DefectsCmd),
    /// Synthetic micrographs with ground truth.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Active-learning campaign manifests.
    #[command(subcommand)]
    Campaign(CampaignCmd),
}

#[derive(Args)]
struct OutArg {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SeedArg {
    /// Random seed; falls back to the config file, then COREKIT_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum FeaturesCmd {
    /// Feature matrix of every PNG/PGM image in a directory.
    Extract {
        #[arg(long)]
        images: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args)]
struct EmbedArgs {
    /// Feature matrix CSV.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    pca_dims: Option<usize>,
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    k_neighbors: Option<usize>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Subcommand)]
enum EmbedCmd {
    Pca(EmbedArgs),
    Tsne(EmbedArgs),
    Isomap(EmbedArgs),
    /// SVG scatter plot of a 2-D embedding.
    Plot {
        #[arg(long)]
        embedding: PathBuf,
        /// Cluster assignment CSV used for colors.
        #[arg(long)]
        clusters: Option<PathBuf>,
        /// Selection plan JSON or id CSV whose points get a ring.
        #[arg(long)]
        highlight: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fixed cluster count; otherwise chosen by silhouette over [k-min, k-max].
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct RoundArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Already labeled ids (CSV, first column).
    #[arg(long)]
    labeled: Option<PathBuf>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    round: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Subcommand)]
enum SelectCmd {
    /// Spread-ranked clusters, maximin Latin hypercube inside each.
    Smile {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[command(flatten)]
        round: RoundArgs,
    },
    /// Highest ensemble-uncertainty scores first.
    Uncertainty {
        /// Score CSV (image_id, score); its ids form the pool.
        #[arg(long)]
        scores: PathBuf,
        #[command(flatten)]
        round: RoundArgs,
    },
    /// Uniform draw from the unlabeled pool.
    Random {
        /// Pool ids (CSV, first column).
        #[arg(long)]
        pool: PathBuf,
        #[command(flatten)]
        round: RoundArgs,
    },
}

#[derive(Subcommand)]
enum SegmentCmd {
    /// Global Otsu threshold per image.
    Otsu {
        #[arg(long)]
        images: PathBuf,
        #[arg(long, value_enum, default_value_t = PolarityArg::Dark)]
        polarity: PolarityArg,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolarityArg {
    Dark,
    Bright,
}

#[derive(Subcommand)]
enum UncertaintyCmd {
    /// Mean pixel entropy per image. Matching files are grouped by file
    /// stem, one group per image.
    Ensemble {
        /// Glob pattern over 16-bit probability maps, e.g. `runs/*/img0001.png`.
        #[arg(long)]
        maps: String,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Pixel precision, recall and macro F1 of predicted masks.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Sliced W1 between a subset of an embedding and the whole of it.
    Coverage {
        #[arg(long)]
        embedding: PathBuf,
        /// Selection plan JSON or id CSV.
        #[arg(long)]
        subset: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PROJECTIONS)]
        projections: usize,
        /// Name recorded in the report.
        #[arg(long, default_value = "subset")]
        label: String,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand)]
enum DefectsCmd {
    /// Connected defect regions of every mask.
    Extract {
        #[arg(long)]
        masks: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// 128×128 patches around each instance.
    Patches {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        instances: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Geometric porosity / lack-of-fusion labels, then manual overrides.
    Classify {
        #[arg(long)]
        instances: PathBuf,
        /// CSV (image_id, instance_id, class) applied after the heuristic.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CIRCULARITY_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Per-image counts, area fractions and class fractions.
    Stats {
        #[arg(long)]
        instances: PathBuf,
        /// Masks supply the image list and sizes.
        #[arg(long)]
        masks: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Statistics averaged per (power, speed) condition, as SVG and CSV.
    ProcessMap {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        conditions: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Micrographs, masks, instance truth and a condition map.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// The standard benchmark: pool and test set over several imaging regimes.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Dataset directory with images/ and masks/.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    dataset: Option<PathBuf>,
    /// Held-out test ids (CSV, first column); required with --dataset.
    #[arg(long, requires = "dataset")]
    test: Option<PathBuf>,
    /// Round-0 manifest to continue from instead of a dataset.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// One or more strategies, comma separated.
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<Strategy>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Labeled pixels per training image; 0 uses every pixel.
    #[arg(long)]
    annotated_pixels: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Tsne,
    Pca,
    Isomap,
}

#[derive(Subcommand)]
enum CampaignCmd {
    /// Round-0 manifest over a dataset.
    Init {
        #[arg(long)]
        dataset: PathBuf,
        /// Held-out test ids (CSV, first column).
        #[arg(long)]
        test: PathBuf,
        /// Initially labeled ids (CSV, first column).
        #[arg(long)]
        labeled: Option<PathBuf>,
        #[arg(long, default_value = "smile")]
        strategy: Strategy,
        /// JSON recorded verbatim in the manifest.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Appends one round to a manifest, writing the result under --out.
    Commit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        coverage: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Full select/label/train/evaluate loop with the simulated learner.
    Simulate(SimulateArgs),
}

enum CliError {
    Usage(&'static str, String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 2 {
                eprintln!("error[E_USAGE]: {}", e.kind());
            }
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command, cli.jobs as usize) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(code, msg)) => {
            eprintln!("error[{code}]: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command, jobs: usize) -> CliResult<()> {
    match cmd {
        Command::Features(FeaturesCmd::Extract { images, out }) => features_extract(&images, &out.out, jobs),
        Command::Embed(EmbedCmd::Pca(a)) => embed(a, EmbedMethod::Pca),
        Command::Embed(EmbedCmd::Tsne(a)) => embed(a, EmbedMethod::Tsne),
        Command::Embed(EmbedCmd::Isomap(a)) => embed(a, EmbedMethod::Isomap),
        Command::Embed(EmbedCmd::Plot { embedding, clusters, highlight, out }) => {
            embed_plot(&embedding, clusters.as_deref(), highlight.as_deref(), &out.out)
        }
        Command::Cluster(a) => cluster(a),
        Command::Select(c) => select(c),
        Command::Segment(SegmentCmd::Otsu { images, polarity, out }) => segment_otsu(&images, polarity, &out.out, jobs),
        Command::Uncertainty(UncertaintyCmd::Ensemble { maps, out }) => uncertainty_ensemble(&maps, &out.out, jobs),
        Command::Eval(EvalCmd::Metrics { pred, truth, out }) => eval_metrics(&pred, &truth, &out.out),
        Command::Eval(EvalCmd::Coverage { embedding, subset, projections, label, out }) => {
            eval_coverage(&embedding, &subset, projections, &label, &out.out)
        }
        Command::Defects(c) => defects(c, jobs),
        Command::Synth(SynthCmd::Gen { config, count, seed, out }) => synth_gen(config.as_deref(), count, seed.seed, &out.out),
        Command::Synth(SynthCmd::Bench { config, seed, out }) => synth_bench(config.as_deref(), seed.seed, &out.out),
        Command::Campaign(CampaignCmd::Init { dataset, test, labeled, strategy, config, seed, out }) => {
            campaign_init(&dataset, &test, labeled.as_deref(), strategy, config.as_deref(), seed.seed, &out.out)
        }
        Command::Campaign(CampaignCmd::Commit { manifest, plan, metrics, coverage, out }) => {
            campaign_commit(&manifest, &plan, metrics.as_deref(), coverage.as_deref(), &out.out)
        }
        Command::Campaign(CampaignCmd::Simulate(a)) => campaign_simulate(a, jobs),
    }
}

// ---- shared helpers ----

fn out_dir(out: &Path) -> CliResult<&Path> {
    fs::create_dir_all(out)?;
    Ok(out)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    fs::write(path, to_canonical_json(value)?)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()).into());
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?).map_err(Error::from)?)
}

/// Config file contents, or the defaults when no file is given.
fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else { return Ok(T::default()) };
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()).into());
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage("E_CONFIG", format!("{}: {e}", path.display())))
}

/// Flag, then config value, then `COREKIT_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage("E_USAGE", format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn seed_in(v: &serde_json::Value) -> Option<u64> {
    v.get("seed").and_then(serde_json::Value::as_u64)
}

/// Config file as raw JSON, used to tell an explicit seed from a default one.
fn raw_config(path: Option<&Path>) -> CliResult<serde_json::Value> {
    match path {
        Some(p) => load_config::<serde_json::Value>(Some(p)),
        None => Ok(serde_json::Value::Null),
    }
}

/// Ids from a selection-plan JSON or an id CSV.
fn read_id_list(path: &Path) -> CliResult<Vec<ImageId>> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        let plan: SelectionPlan = read_json(path)?;
        Ok(plan.ids())
    } else {
        Ok(read_ids(path)?)
    }
}

fn labeled_set(path: Option<&Path>) -> CliResult<BTreeSet<ImageId>> {
    Ok(match path {
        Some(p) => read_ids(p)?.into_iter().collect(),
        None => BTreeSet::new(),
    })
}

// ---- features / embed / cluster ----

fn features_extract(images: &Path, out: &Path, jobs: usize) -> CliResult<()> {
    let files: Vec<(ImageId, PathBuf)> = images_in(images)?.into_iter().collect();
    let loaded = par_map(&files, jobs, |(id, p)| load_grayscale(p).map(|r| (id.clone(), r)))
        .into_iter()
        .collect::<corekit::Result<Vec<_>>>()?;
    let refs: Vec<(ImageId, &corekit::Raster)> = loaded.iter().map(|(id, r)| (id.clone(), r)).collect();
    let m = feature_matrix(&refs, jobs)?;
    write_feature_matrix(out_dir(out)?.join("features.csv"), &m)?;
    Ok(())
}

#[derive(Serialize)]
struct ResolvedEmbed {
    seed: u64,
    #[serde(flatten)]
    embed: EmbedConfig,
}

fn embed(a: EmbedArgs, method: EmbedMethod) -> CliResult<()> {
    let raw = raw_config(a.config.as_deref())?;
    let mut cfg: EmbedConfig = load_config(a.config.as_deref())?;
    cfg.method = method;
    if let Some(v) = a.pca_dims {
        cfg.pca_dims = v;
    }
    if a.perplexity.is_some() {
        cfg.perplexity = a.perplexity;
    }
    if let Some(v) = a.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = a.k_neighbors {
        cfg.k_neighbors = v;
    }
    let seed = resolve_seed(a.seed.seed, seed_in(&raw))?;
    let features = read_feature_matrix(&a.features)?;
    let e = embed_features(&features, &cfg, seed)?;
    let out = out_dir(&a.out.out)?;
    write_embedding(out.join("embedding.csv"), &e)?;
    write_json(&out.join(CONFIG_FILE), &ResolvedEmbed { seed, embed: cfg })
}

fn embed_plot(embedding: &Path, clusters: Option<&Path>, highlight: Option<&Path>, out: &Path) -> CliResult<()> {
    let e = read_embedding(embedding)?;
    let assignments = match clusters {
        Some(p) => Some(read_clustering(p, &e)?.assignments),
        None => None,
    };
    let hl: BTreeSet<ImageId> = match highlight {
        Some(p) => read_id_list(p)?.into_iter().collect(),
        None => BTreeSet::new(),
    };
    let svg = embedding_svg(&e, assignments.as_deref(), &hl)?;
    fs::write(out_dir(out)?.join("embedding.svg"), svg)?;
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ClusterConfig {
    k: Option<usize>,
    k_min: Option<usize>,
    k_max: Option<usize>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ClusterSummaryRow {
    cluster: usize,
    size: usize,
    sigma: Vec<f64>,
    spread: f64,
}

#[derive(Serialize)]
struct ClusterReport {
    k: usize,
    silhouette: Option<f64>,
    clusters: Vec<ClusterSummaryRow>,
}

fn cluster(a: ClusterArgs) -> CliResult<()> {
    let mut cfg: ClusterConfig = load_config(a.config.as_deref())?;
    cfg.k = a.k.or(cfg.k);
    cfg.k_min = a.k_min.or(cfg.k_min);
    cfg.k_max = a.k_max.or(cfg.k_max);
    let seed = resolve_seed(a.seed.seed, cfg.seed)?;
    cfg.seed = Some(seed);
    let e = read_embedding(&a.embedding)?;
    let c = match (cfg.k, cfg.k_min, cfg.k_max) {
        (Some(_), _, _) | (None, None, None) => cluster_embedding(&e, cfg.k, seed)?,
        (None, lo, hi) => {
            let (dlo, dhi) = corekit::embed::default_k_range(e.len());
            corekit::embed::select_k(&e, lo.unwrap_or(dlo), hi.unwrap_or(dhi), seed)?
        }
    };
    let sil = if c.k >= 2 { Some(silhouette(&c)?) } else { None };
    let clusters = (0..c.k)
        .map(|k| {
            cluster_spread(&c, k).map(|s| ClusterSummaryRow { cluster: k, size: s.members.len(), sigma: s.sigma, spread: s.spread })
        })
        .collect::<corekit::Result<Vec<_>>>()?;
    let out = out_dir(&a.out.out)?;
    write_clustering(out.join("clusters.csv"), &c)?;
    write_json(&out.join("clustering.json"), &ClusterReport { k: c.k, silhouette: sil, clusters })?;
    write_json(&out.join(CONFIG_FILE), &cfg)
}

// ---- select ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RoundConfig {
    budget: usize,
    round: usize,
    seed: Option<u64>,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self { budget: 4, round: 1, seed: None }
    }
}

fn select(cmd: SelectCmd) -> CliResult<()> {
    let r = match &cmd {
        SelectCmd::Smile { round, .. } | SelectCmd::Uncertainty { round, .. } | SelectCmd::Random { round, .. } => round,
    };
    let mut cfg: RoundConfig = load_config(r.config.as_deref())?;
    cfg.budget = r.budget.unwrap_or(cfg.budget);
    cfg.round = r.round.unwrap_or(cfg.round);
    let seed = resolve_seed(r.seed.seed, cfg.seed)?;
    cfg.seed = Some(seed);
    let labeled = labeled_set(r.labeled.as_deref())?;
    let plan = match &cmd {
        SelectCmd::Smile { embedding, clusters, .. } => {
            let e = read_embedding(embedding)?;
            let c = read_clustering(clusters, &e)?;
            smile_select(&e, &c, &labeled, cfg.budget, cfg.round, seed)?
        }
        SelectCmd::Uncertainty { scores, .. } => {
            let s = read_scores(scores)?;
            let pool: Vec<ImageId> = s.keys().cloned().collect();
            uncertainty_select(&pool, &s, &labeled, cfg.budget, cfg.round, seed)?
        }
        SelectCmd::Random { pool, .. } => random_select(&read_ids(pool)?, &labeled, cfg.budget, cfg.round, seed)?,
    };
    let out = out_dir(&r.out.out)?;
    write_json(&out.join("plan.json"), &plan)?;
    write_json(&out.join(CONFIG_FILE), &cfg)
}

// ---- segment / uncertainty / eval ----

fn segment_otsu(images: &Path, polarity: PolarityArg, out: &Path, jobs: usize) -> CliResult<()> {
    let polarity = match polarity {
        PolarityArg::Dark => Polarity::Dark,
        PolarityArg::Bright => Polarity::Bright,
    };
    let out = out_dir(out)?;
    let masks = out.join("masks");
    fs::create_dir_all(&masks)?;
    let files: Vec<(ImageId, PathBuf)> = images_in(images)?.into_iter().collect();
    let rows = par_map(&files, jobs, |(id, p)| -> corekit::Result<String> {
        let img = load_grayscale(p)?;
        let r = otsu_threshold(&img);
        save_mask(&otsu_segment(&img, polarity), masks.join(format!("{id}.png")))?;
        Ok(format!("{id},{},{},{}\n", r.threshold, r.between_variance, r.degenerate))
    });
    let mut csv = String::from("image_id,threshold,between_variance,degenerate\n");
    for r in rows {
        csv.push_str(&r?);
    }
    fs::write(out.join("otsu.csv"), csv)?;
    Ok(())
}

fn uncertainty_ensemble(pattern: &str, out: &Path, jobs: usize) -> CliResult<()> {
    let paths = glob::glob(pattern).map_err(|e| CliError::Usage("E_USAGE", format!("bad glob {pattern:?}: {e}")))?;
    let mut groups: BTreeMap<ImageId, Vec<PathBuf>> = BTreeMap::new();
    for p in paths {
        let p = p.map_err(|e| Error::Io(e.into()))?;
        if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
            groups.entry(stem.to_string()).or_default().push(p);
        }
    }
    if groups.is_empty() {
        return Err(Error::InvalidInput(format!("no probability maps match {pattern:?}")).into());
    }
    let groups: Vec<(ImageId, Vec<PathBuf>)> = groups.into_iter().collect();
    let scores = par_map(&groups, jobs, |(id, files)| -> corekit::Result<(ImageId, f64)> {
        let maps = files.iter().map(load_probmap).collect::<corekit::Result<Vec<_>>>()?;
        Ok((id.clone(), ensemble_uncertainty(&maps)?.score))
    })
    .into_iter()
    .collect::<corekit::Result<BTreeMap<_, _>>>()?;
    write_scores(out_dir(out)?.join("uncertainty.csv"), &scores)?;
    Ok(())
}

fn eval_metrics(pred: &Path, truth: &Path, out: &Path) -> CliResult<()> {
    let truth_files = images_in(truth)?;
    let mut items = Vec::new();
    for (id, p) in images_in(pred)? {
        let t = truth_files.get(&id).ok_or_else(|| Error::MissingFile(id.clone()))?;
        items.push((id, load_mask(p)?, load_mask(t)?));
    }
    let report = evaluate(&items)?;
    println!(
        "{} images: macro F1 {:.4} ± {:.4} (defect F1 {:.4}, background F1 {:.4})",
        report.images.len(),
        report.mean_macro_f1,
        report.std_macro_f1,
        report.defect.f1,
        report.background.f1
    );
    write_json(&out_dir(out)?.join("metrics.json"), &report)
}

fn eval_coverage(embedding: &Path, subset: &Path, projections: usize, label: &str, out: &Path) -> CliResult<()> {
    let e = read_embedding(embedding)?;
    let ids = read_id_list(subset)?;
    let report = sliced_wasserstein(&e.subset(&ids)?, &e, projections, label)?;
    println!("sliced W1 of {} / {} points: {:.6}", report.subset_size, report.full_size, report.sliced_w1);
    write_json(&out_dir(out)?.join("coverage.json"), &report)
}

// ---- defects ----

fn defects(cmd: DefectsCmd, jobs: usize) -> CliResult<()> {
    match cmd {
        DefectsCmd::Extract { masks, out } => {
            let files: Vec<(ImageId, PathBuf)> = images_in(&masks)?.into_iter().collect();
            let found = par_map(&files, jobs, |(id, p)| load_mask(p).map(|m| (id.clone(), extract_instances(&m))))
                .into_iter()
                .collect::<corekit::Result<BTreeMap<_, _>>>()?;
            write_instances(out_dir(&out.out)?.join("instances.csv"), &found)?;
        }
        DefectsCmd::Patches { images, instances, out } => {
            let inst = read_instances(&instances)?;
            let files = images_in(&images)?;
            let out = out_dir(&out.out)?;
            let dir = out.join("patches");
            fs::create_dir_all(&dir)?;
            let mut csv = String::from("image_id,instance_id,window_x,window_y,window_w,window_h,resize,path\n");
            for (id, list) in &inst {
                let path = files.get(id).ok_or_else(|| Error::MissingFile(id.clone()))?;
                let img = load_grayscale(path)?;
                for i in list {
                    let spec = patch_window(i, img.width(), img.height())?;
                    let name = format!("{id}_{}.png", i.id);
                    save_grayscale(&extract_patch(&img, &spec)?, dir.join(&name))?;
                    let w = spec.window;
                    csv.push_str(&format!("{id},{},{},{},{},{},{},patches/{name}\n", i.id, w.x, w.y, w.w, w.h, spec.resize));
                }
            }
            fs::write(out.join("patches.csv"), csv)?;
        }
        DefectsCmd::Classify { instances, labels, threshold, out } => {
            let mut inst = read_instances(&instances)?;
            for list in inst.values_mut() {
                classify_all(list, threshold);
            }
            if let Some(l) = labels {
                apply_labels(&mut inst, &read_labels(l)?)?;
            }
            write_instances(out_dir(&out.out)?.join("instances.csv"), &inst)?;
        }
        DefectsCmd::Stats { instances, masks, out } => {
            let inst = read_instances(&instances)?;
            let files = images_in(&masks)?;
            if let Some(id) = inst.keys().find(|id| !files.contains_key(*id)) {
                return Err(Error::MissingFile(id.clone()).into());
            }
            let mut stats = Vec::new();
            for (id, p) in files {
                let m = load_mask(p)?;
                let list = inst.get(&id).map(Vec::as_slice).unwrap_or(&[]);
                stats.push(defect_stats(&id, list, m.width(), m.height()));
            }
            write_stats(out_dir(&out.out)?.join("stats.csv"), &stats)?;
        }
        DefectsCmd::ProcessMap { stats, conditions, out } => {
            let aggs = aggregate_by_condition(&read_stats(&stats)?, &read_conditions(&conditions)?)?;
            let (svg, csv) = emit_process_map(&aggs)?;
            let out = out_dir(&out.out)?;
            fs::write(out.join("process_map.svg"), svg)?;
            fs::write(out.join("process_map.csv"), csv)?;
        }
    }
    Ok(())
}

// ---- synth ----

fn synth_gen(config: Option<&Path>, count: usize, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let raw = raw_config(config)?;
    let mut cfg: SynthConfig = load_config(config)?;
    cfg.seed = resolve_seed(seed, seed_in(&raw))?;
    let out = out_dir(out)?;
    generate_dataset(&cfg, count, out)?;
    write_json(&out.join(CONFIG_FILE), &cfg)
}

fn synth_bench(config: Option<&Path>, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let raw = raw_config(config)?;
    let mut cfg: BenchmarkConfig = load_config(config)?;
    cfg.seed = resolve_seed(seed, seed_in(&raw))?;
    let data = generate_benchmark(&cfg)?;
    let out = out_dir(out)?;
    data.save(out)?;
    write_ids(out.join("pool_ids.csv"), &data.pool_ids)?;
    write_ids(out.join("test_ids.csv"), &data.test_ids)?;
    let mut csv = String::from("image_id,regime\n");
    for (id, &r) in &data.regime_of {
        csv.push_str(&format!("{id},{}\n", cfg.regimes[r].name));
    }
    fs::write(out.join("regimes.csv"), csv)?;
    write_json(&out.join(CONFIG_FILE), &cfg)
}

// ---- campaign ----

fn campaign_init(
    dataset: &Path,
    test: &Path,
    labeled: Option<&Path>,
    strategy: Strategy,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> CliResult<()> {
    let raw = raw_config(config)?;
    let seed = resolve_seed(seed, seed_in(&raw))?;
    let initial: Vec<ImageId> = labeled_set(labeled)?.into_iter().collect();
    let m = init_campaign(dataset, &read_ids(test)?, &initial, strategy, seed, raw)?;
    save_manifest(out_dir(out)?.join(MANIFEST_FILE), &m)?;
    Ok(())
}

fn campaign_commit(manifest: &Path, plan: &Path, metrics: Option<&Path>, coverage: Option<&Path>, out: &Path) -> CliResult<()> {
    let m = load_manifest(manifest)?;
    let plan: SelectionPlan = read_json(plan)?;
    let metrics: Option<MetricsReport> = metrics.map(read_json).transpose()?;
    let coverage: Option<CoverageReport> = coverage.map(read_json).transpose()?;
    let next = commit_round(&m, plan, metrics, coverage)?;
    save_manifest(out_dir(out)?.join(MANIFEST_FILE), &next)?;
    Ok(())
}

/// `campaign simulate` settings as read from `--config`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateFile {
    strategies: Vec<Strategy>,
    rounds: usize,
    budget: usize,
    seed: Option<u64>,
    k: Option<usize>,
    embed: EmbedConfig,
    projections: usize,
    annotated_pixels: usize,
}

impl Default for SimulateFile {
    fn default() -> Self {
        let d = SimulateConfig::default();
        Self {
            strategies: vec![Strategy::Smile],
            rounds: d.rounds,
            budget: d.budget,
            seed: None,
            k: d.k,
            embed: d.embed,
            projections: d.projections,
            annotated_pixels: DEFAULT_ANNOTATED_PIXELS,
        }
    }
}

fn campaign_simulate(a: SimulateArgs, jobs: usize) -> CliResult<()> {
    let mut f: SimulateFile = load_config(a.config.as_deref())?;
    if !a.strategy.is_empty() {
        f.strategies = a.strategy.clone();
    }
    f.rounds = a.rounds.unwrap_or(f.rounds);
    f.budget = a.budget.unwrap_or(f.budget);
    f.k = a.k.or(f.k);
    if let Some(m) = a.method {
        f.embed.method = match m {
            MethodArg::Tsne => EmbedMethod::Tsne,
            MethodArg::Pca => EmbedMethod::Pca,
            MethodArg::Isomap => EmbedMethod::Isomap,
        };
    }
    f.annotated_pixels = a.annotated_pixels.unwrap_or(f.annotated_pixels);

    // round-0 manifests, one per strategy
    let starts: Vec<RoundManifest> = match (&a.manifest, &a.dataset) {
        (Some(path), _) => {
            let m = load_manifest(path)?;
            f.seed = Some(resolve_seed(a.seed.seed, f.seed.or(Some(m.seed)))?);
            if a.strategy.is_empty() {
                f.strategies = vec![m.strategy];
            }
            f.strategies.iter().map(|&s| RoundManifest { strategy: s, ..m.clone() }).collect()
        }
        (None, Some(dataset)) => {
            let test = a
                .test
                .as_deref()
                .ok_or_else(|| CliError::Usage("E_USAGE", "--test is required with --dataset".into()))?;
            let seed = resolve_seed(a.seed.seed, f.seed)?;
            f.seed = Some(seed);
            let test_ids = read_ids(test)?;
            f.strategies
                .iter()
                .map(|&s| init_campaign(dataset, &test_ids, &[], s, seed, serde_json::Value::Null))
                .collect::<corekit::Result<Vec<_>>>()?
        }
        (None, None) => return Err(CliError::Usage("E_USAGE", "one of --dataset or --manifest is required".into())),
    };
    if f.strategies.is_empty() {
        return Err(CliError::Usage("E_USAGE", "no strategy given".into()));
    }
    let dataset_dir = match &a.manifest {
        Some(path) => resolve_dataset_dir(&starts[0], path),
        None => PathBuf::from(&starts[0].dataset_dir),
    };
    let data = CampaignData::load(&dataset_dir, jobs)?;

    let seed = f.seed.expect("resolved above");
    let out = out_dir(&a.out.out)?;
    let mut finished = Vec::new();
    for start in &starts {
        let cfg = SimulateConfig {
            strategy: start.strategy,
            rounds: f.rounds,
            budget: f.budget,
            seed,
            k: f.k,
            embed: f.embed.clone(),
            projections: f.projections,
            annotated_pixels: (f.annotated_pixels > 0).then_some(f.annotated_pixels),
            jobs,
        };
        let m = simulate(start, &data, &cfg)?;
        save_manifest(out.join(format!("campaign_{}.json", start.strategy)), &m)?;
        finished.push(m);
    }
    let table = metrics_table(&finished);
    print!("{table}");
    fs::write(out.join("metrics_table.txt"), table)?;
    write_json(&out.join(CONFIG_FILE), &f)
}
