//! Campaign manifests: content-hashed dataset, per-round selections, labeled
//! pool snapshots, and the scores recorded after each round.
//!
//! Serialization is canonical (sorted keys, floats with 17 significant
//! digits), so equal manifests are byte-identical on disk.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{CoverageReport, MetricsReport};
use crate::select::{SelectionPlan, Strategy};
use crate::ImageId;

pub const SCHEMA_VERSION: u32 = 1;
pub const IMAGE_DIR: &str = "images";
pub const MASK_DIR: &str = "masks";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub method: String,
    /// SHA-256 of the canonical coordinate listing.
    pub hash: String,
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Absent for round 0.
    pub plan: Option<SelectionPlan>,
    /// Labeled pool after this round, sorted.
    pub labeled: Vec<ImageId>,
    pub metrics: Option<MetricsReport>,
    pub coverage: Option<CoverageReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundManifest {
    pub schema_version: u32,
    pub campaign_id: String,
    /// As given at init time.
    pub dataset_dir: String,
    /// Relative path → SHA-256 hex of every file under `images/` and `masks/`.
    pub dataset_hashes: BTreeMap<String, String>,
    pub strategy: Strategy,
    pub seed: u64,
    /// Held-out ids, sorted.
    pub test_ids: Vec<ImageId>,
    /// Selectable ids (every image not in the test set), sorted.
    pub pool_ids: Vec<ImageId>,
    pub embedding: Option<EmbeddingRecord>,
    /// Resolved run configuration, echoed for review.
    pub config: Value,
    pub rounds: Vec<RoundRecord>,
}

const KNOWN_FIELDS: [&str; 11] = [
    "schema_version",
    "campaign_id",
    "dataset_dir",
    "dataset_hashes",
    "strategy",
    "seed",
    "test_ids",
    "pool_ids",
    "embedding",
    "config",
    "rounds",
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

/// SHA-256 of every file in `images/` and `masks/`, keyed by relative path.
pub fn hash_dataset(dataset_dir: &Path) -> Result<BTreeMap<String, String>> {
    if !dataset_dir.join(IMAGE_DIR).is_dir() {
        return Err(Error::FileNotFound(dataset_dir.join(IMAGE_DIR)));
    }
    let mut out = BTreeMap::new();
    for sub in [IMAGE_DIR, MASK_DIR] {
        for f in list_files(&dataset_dir.join(sub))? {
            let name = f.file_name().and_then(|n| n.to_str()).ok_or_else(|| Error::InvalidInput(format!("non-UTF-8 file name {}", f.display())))?;
            out.insert(format!("{sub}/{name}"), sha256_hex(&fs::read(&f)?));
        }
    }
    Ok(out)
}

/// Image ids (file stems) under `images/` mapped to their paths.
pub fn dataset_images(dataset_dir: &Path) -> Result<BTreeMap<ImageId, PathBuf>> {
    images_in(&dataset_dir.join(IMAGE_DIR))
}

/// PNG and PGM files directly inside `dir`, keyed by file stem.
pub fn images_in(dir: &Path) -> Result<BTreeMap<ImageId, PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.to_path_buf()));
    }
    let mut out = BTreeMap::new();
    for f in list_files(dir)? {
        let ext = f.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("png" | "pgm")) {
            continue;
        }
        if let Some(stem) = f.file_stem().and_then(|s| s.to_str()) {
            if out.insert(stem.to_string(), f.clone()).is_some() {
                return Err(Error::InvalidInput(format!("two images share the id {stem}")));
            }
        }
    }
    Ok(out)
}

/// Mask path for `id`, if any `masks/{id}.*` exists.
pub fn mask_path(dataset_dir: &Path, id: &str) -> Option<PathBuf> {
    ["png", "pgm"].iter().map(|ext| dataset_dir.join(MASK_DIR).join(format!("{id}.{ext}"))).find(|p| p.is_file())
}

/// Round-0 manifest. Every test and initially labeled id needs an image
/// and a mask; the two sets must be disjoint.
pub fn init_campaign(
    dataset_dir: &Path,
    test_ids: &[ImageId],
    initial_labeled: &[ImageId],
    strategy: Strategy,
    seed: u64,
    config: Value,
) -> Result<RoundManifest> {
    let images = dataset_images(dataset_dir)?;
    let test: BTreeSet<ImageId> = test_ids.iter().cloned().collect();
    let labeled: BTreeSet<ImageId> = initial_labeled.iter().cloned().collect();
    if let Some(id) = test.intersection(&labeled).next() {
        return Err(Error::TestTrainOverlap(id.clone()));
    }
    for id in test.iter().chain(&labeled) {
        if !images.contains_key(id) || mask_path(dataset_dir, id).is_none() {
            return Err(Error::MissingFile(id.clone()));
        }
    }
    let dataset_hashes = hash_dataset(dataset_dir)?;
    let pool_ids: Vec<ImageId> = images.keys().filter(|id| !test.contains(*id)).cloned().collect();
    let mut id_src = serde_json::to_vec(&dataset_hashes)?;
    id_src.extend(format!("|{strategy}|{seed}|{test:?}|{labeled:?}").bytes());
    let m = RoundManifest {
        schema_version: SCHEMA_VERSION,
        campaign_id: sha256_hex(&id_src)[..16].to_string(),
        dataset_dir: dataset_dir.to_string_lossy().into_owned(),
        dataset_hashes,
        strategy,
        seed,
        test_ids: test.into_iter().collect(),
        pool_ids,
        embedding: None,
        config,
        rounds: vec![RoundRecord { round: 0, plan: None, labeled: labeled.into_iter().collect(), metrics: None, coverage: None }],
    };
    validate(&m)?;
    Ok(m)
}

impl RoundManifest {
    pub fn last_round(&self) -> usize {
        self.rounds.last().map_or(0, |r| r.round)
    }

    pub fn labeled(&self) -> BTreeSet<ImageId> {
        self.rounds.last().map(|r| r.labeled.iter().cloned().collect()).unwrap_or_default()
    }

    /// Every id selected in rounds 1.., in commit order.
    pub fn selections(&self) -> Vec<ImageId> {
        self.rounds.iter().filter_map(|r| r.plan.as_ref()).flat_map(|p| p.ids()).collect()
    }
}

/// Appends round `last + 1`; the plan must pick only fresh, non-test pool
/// ids.
pub fn commit_round(
    manifest: &RoundManifest,
    plan: SelectionPlan,
    metrics: Option<MetricsReport>,
    coverage: Option<CoverageReport>,
) -> Result<RoundManifest> {
    let expected = manifest.last_round() + 1;
    if plan.round != expected {
        return Err(Error::RoundOrderViolation { expected, got: plan.round });
    }
    let mut labeled = manifest.labeled();
    let test: BTreeSet<&ImageId> = manifest.test_ids.iter().collect();
    let pool: BTreeSet<&ImageId> = manifest.pool_ids.iter().collect();
    for id in plan.ids() {
        if test.contains(&id) {
            return Err(Error::TestTrainOverlap(id));
        }
        if !pool.contains(&id) {
            return Err(Error::MissingFile(id));
        }
        if !labeled.insert(id.clone()) {
            return Err(Error::DuplicateSelection(id));
        }
    }
    let mut next = manifest.clone();
    next.rounds.push(RoundRecord {
        round: expected,
        plan: Some(plan),
        labeled: labeled.into_iter().collect(),
        metrics,
        coverage,
    });
    Ok(next)
}

/// Structural invariants: schema version, contiguous rounds from 0,
/// strictly growing pools built from fresh selections, no test leakage.
pub fn validate(m: &RoundManifest) -> Result<()> {
    if m.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersionMismatch { expected: SCHEMA_VERSION, found: m.schema_version });
    }
    if m.rounds.is_empty() {
        return Err(Error::InvalidManifest("no round records".into()));
    }
    let test: BTreeSet<&ImageId> = m.test_ids.iter().collect();
    let mut seen: BTreeSet<ImageId> = BTreeSet::new();
    for (i, r) in m.rounds.iter().enumerate() {
        if r.round != i {
            return Err(Error::RoundOrderViolation { expected: i, got: r.round });
        }
        let mut expect: BTreeSet<ImageId> = seen.clone();
        match (&r.plan, i) {
            (None, 0) => expect.extend(r.labeled.iter().cloned()),
            (Some(_), 0) => return Err(Error::InvalidManifest("round 0 carries a plan".into())),
            (None, _) => return Err(Error::InvalidManifest(format!("round {i} has no plan"))),
            (Some(p), _) => {
                if p.round != i {
                    return Err(Error::RoundOrderViolation { expected: i, got: p.round });
                }
                for id in p.ids() {
                    if !expect.insert(id.clone()) {
                        return Err(Error::DuplicateSelection(id));
                    }
                }
            }
        }
        let got: BTreeSet<ImageId> = r.labeled.iter().cloned().collect();
        if got.len() != r.labeled.len() || got != expect {
            return Err(Error::InvalidManifest(format!("round {i} labeled pool does not match its selections")));
        }
        if let Some(id) = got.iter().find(|id| test.contains(id)) {
            return Err(Error::TestTrainOverlap(id.clone()));
        }
        seen = got;
    }
    Ok(())
}

fn write_canonical(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else {
                let f = n.as_f64().expect("number");
                let _ = write!(out, "{f:.16e}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_canonical(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push_str(": ");
                write_canonical(&map[*k], indent + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Canonical JSON text of any serializable value.
pub fn to_canonical_json<S: Serialize>(value: &S) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_canonical(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

pub fn save_manifest(path: impl AsRef<Path>, m: &RoundManifest) -> Result<()> {
    validate(m)?;
    fs::write(path, to_canonical_json(m)?)?;
    Ok(())
}

/// Parses and validates manifest text without touching the dataset.
/// Returns the unknown top-level fields that were ignored.
pub fn parse_manifest(text: &str) -> Result<(RoundManifest, Vec<String>)> {
    let v: Value = serde_json::from_str(text)?;
    let obj = v.as_object().ok_or_else(|| Error::InvalidManifest("top level is not an object".into()))?;
    let found = obj.get("schema_version").and_then(Value::as_u64);
    match found {
        Some(x) if x == SCHEMA_VERSION as u64 => {}
        Some(x) => return Err(Error::SchemaVersionMismatch { expected: SCHEMA_VERSION, found: x.min(u32::MAX as u64) as u32 }),
        None => return Err(Error::InvalidManifest("missing schema_version".into())),
    }
    let unknown: Vec<String> = obj.keys().filter(|k| !KNOWN_FIELDS.contains(&k.as_str())).cloned().collect();
    for k in &unknown {
        log::warn!("ignoring unknown manifest field {k:?}");
    }
    let m: RoundManifest = serde_json::from_value(v).map_err(|e| Error::InvalidManifest(e.to_string()))?;
    validate(&m)?;
    Ok((m, unknown))
}

/// Where the manifest's dataset lives: the stored path as-is, else relative
/// to the manifest's directory.
pub fn resolve_dataset_dir(m: &RoundManifest, manifest_path: &Path) -> PathBuf {
    let stored = PathBuf::from(&m.dataset_dir);
    if stored.is_absolute() || stored.is_dir() {
        return stored;
    }
    manifest_path.parent().map(|p| p.join(&stored)).unwrap_or(stored)
}

/// Errors with `HashMismatch` naming the first file that changed, appeared
/// or disappeared.
pub fn verify_hashes(m: &RoundManifest, dataset_dir: &Path) -> Result<()> {
    let now = hash_dataset(dataset_dir)?;
    let names: BTreeSet<&String> = now.keys().chain(m.dataset_hashes.keys()).collect();
    for name in names {
        if now.get(name) != m.dataset_hashes.get(name) {
            return Err(Error::HashMismatch(name.clone()));
        }
    }
    Ok(())
}

/// Loads, validates, and checks the dataset hashes.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<RoundManifest> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let (m, _) = parse_manifest(&fs::read_to_string(path)?)?;
    verify_hashes(&m, &resolve_dataset_dir(&m, path))?;
    Ok(m)
}
