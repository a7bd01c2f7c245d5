//! CSV files exchanged between pipeline stages. Floats are written in their
//! shortest round-trip form, so a read after a write is exact.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use crate::embed::{Clustering, EmbeddingSet};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::ImageId;

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    Ok(csv::Reader::from_path(path)?)
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("{}: not a number: {s:?}", path.display())))
}

/// Rows of `image_id, v0, v1, …` into ids and a dense matrix.
fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<ImageId>, Array2<f64>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("image_id") {
        return Err(Error::InvalidInput(format!("{}: first column must be image_id", path.display())));
    }
    let d = header.len() - 1;
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        ids.push(rec[0].to_string());
        for v in rec.iter().skip(1) {
            flat.push(parse_f64(v, path)?);
        }
    }
    let n = ids.len();
    let values = Array2::from_shape_vec((n, d), flat).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((header[1..].to_vec(), ids, values))
}

fn write_rows(path: &Path, columns: &[String], ids: &[ImageId], values: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["image_id".to_string()];
    header.extend_from_slice(columns);
    w.write_record(&header)?;
    for (id, row) in ids.iter().zip(values.rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Header `image_id,f0,…,f{D-1}`.
pub fn write_feature_matrix(path: impl AsRef<Path>, m: &FeatureMatrix<f64>) -> Result<()> {
    let cols: Vec<String> = (0..m.dim()).map(|j| format!("f{j}")).collect();
    write_rows(path.as_ref(), &cols, &m.ids, &m.values)
}

pub fn read_feature_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix<f64>> {
    let (_, ids, values) = read_rows(path.as_ref())?;
    FeatureMatrix::new(ids, values)
}

fn embedding_columns(d: usize) -> Vec<String> {
    if d == 2 {
        vec!["x".into(), "y".into()]
    } else {
        (0..d).map(|j| format!("d{j}")).collect()
    }
}

/// Header `image_id,x,y` for 2-D embeddings, `image_id,d0,…` otherwise.
pub fn write_embedding(path: impl AsRef<Path>, e: &EmbeddingSet<f64>) -> Result<()> {
    write_rows(path.as_ref(), &embedding_columns(e.dim()), &e.ids, &e.coords)
}

pub fn read_embedding(path: impl AsRef<Path>) -> Result<EmbeddingSet<f64>> {
    let (_, ids, coords) = read_rows(path.as_ref())?;
    EmbeddingSet::new(ids, coords)
}

/// Header `image_id,cluster`.
pub fn write_clustering(path: impl AsRef<Path>, c: &Clustering<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image_id", "cluster"])?;
    for (id, a) in c.embedding.ids.iter().zip(&c.assignments) {
        w.write_record([id.as_str(), &a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_assignments(path: impl AsRef<Path>) -> Result<BTreeMap<ImageId, usize>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for rec in reader(path)?.records() {
        let rec = rec?;
        let c = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::InvalidInput(format!("{}: bad cluster row", path.display())))?;
        out.insert(rec[0].to_string(), c);
    }
    Ok(out)
}

/// Rebuilds a clustering from an embedding and an assignment file.
pub fn read_clustering(path: impl AsRef<Path>, embedding: &EmbeddingSet<f64>) -> Result<Clustering<f64>> {
    let map = read_assignments(path)?;
    let assignments = embedding
        .ids
        .iter()
        .map(|id| map.get(id).copied().ok_or_else(|| Error::InvalidInput(format!("{id} has no cluster assignment"))))
        .collect::<Result<Vec<_>>>()?;
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    Clustering::from_assignments(embedding.clone(), k, assignments)
}

/// Header `image_id,score`.
pub fn write_scores(path: impl AsRef<Path>, scores: &BTreeMap<ImageId, f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image_id", "score"])?;
    for (id, s) in scores {
        w.write_record([id.as_str(), &s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<BTreeMap<ImageId, f64>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for rec in reader(path)?.records() {
        let rec = rec?;
        let s = rec.get(1).ok_or_else(|| Error::InvalidInput(format!("{}: missing score", path.display())))?;
        out.insert(rec[0].to_string(), parse_f64(s, path)?);
    }
    Ok(out)
}

/// A single `image_id` column.
pub fn write_ids(path: impl AsRef<Path>, ids: &[ImageId]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image_id"])?;
    for id in ids {
        w.write_record([id])?;
    }
    w.flush()?;
    Ok(())
}

/// First column of a CSV with a header row; blank rows skipped.
pub fn read_ids(path: impl AsRef<Path>) -> Result<Vec<ImageId>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec?;
        if let Some(id) = rec.get(0).map(str::trim).filter(|s| !s.is_empty()) {
            out.push(id.to_string());
        }
    }
    Ok(out)
}
