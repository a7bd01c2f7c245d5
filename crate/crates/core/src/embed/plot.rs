use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ImageId;

use super::EmbeddingSet;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 30.0;
const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

/// SVG scatter of a 2-D embedding. Points are colored by cluster when
/// assignments are given; `highlight` ids get a black ring.
pub fn embedding_svg(e: &EmbeddingSet<f64>, clusters: Option<&[usize]>, highlight: &BTreeSet<ImageId>) -> Result<String> {
    if e.dim() != 2 {
        return Err(Error::DimensionError(format!("plot needs a 2-D embedding, got {}", e.dim())));
    }
    if let Some(c) = clusters {
        if c.len() != e.len() {
            return Err(Error::DimensionMismatch(format!("{} assignments for {} points", c.len(), e.len())));
        }
    }
    let bounds = |j: usize| {
        let col = e.coords.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo { (lo, hi - lo) } else { (lo - 0.5, 1.0) }
    };
    let (x0, xs) = bounds(0);
    let (y0, ys) = bounds(1);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    for (i, id) in e.ids.iter().enumerate() {
        let px = MARGIN + (e.coords[[i, 0]] - x0) / xs * (WIDTH - 2.0 * MARGIN);
        let py = HEIGHT - MARGIN - (e.coords[[i, 1]] - y0) / ys * (HEIGHT - 2.0 * MARGIN);
        let fill = clusters.map_or("#1f77b4", |c| PALETTE[c[i] % PALETTE.len()]);
        let ring = if highlight.contains(id) { r#" stroke="black" stroke-width="2""# } else { "" };
        let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="4" fill="{fill}"{ring}><title>{id}</title></circle>"#);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
