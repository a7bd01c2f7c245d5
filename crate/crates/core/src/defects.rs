//! Defect instances from binary masks: geometry, patch windows, heuristic
//! classification, per-image statistics and per-process-condition maps.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};
use crate::ImageId;

/// Side of every emitted defect patch.
pub const PATCH_SIZE: usize = 128;
/// Padding around large-defect bounding boxes.
pub const PATCH_PAD: usize = 10;
/// Instances smaller than this stay unlabeled.
pub const MIN_CLASSIFY_AREA: usize = 4;
/// Circularity at or above which an instance counts as porosity.
///
/// With the boundary-edge perimeter, rasterized disks measure between about
/// 0.53 and π²/16 ≈ 0.617, and 10:1 bars about 0.26, so the cut sits between.
pub const DEFAULT_CIRCULARITY_THRESHOLD: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DefectClass {
    Porosity,
    LackOfFusion,
    #[default]
    Unlabeled,
}

impl DefectClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DefectClass::Porosity => "porosity",
            DefectClass::LackOfFusion => "lack_of_fusion",
            DefectClass::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for DefectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DefectClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "porosity" => Ok(DefectClass::Porosity),
            "lack_of_fusion" => Ok(DefectClass::LackOfFusion),
            "unlabeled" => Ok(DefectClass::Unlabeled),
            other => Err(Error::UnknownClass(other.to_string())),
        }
    }
}

/// Axis-aligned pixel rectangle `[x, x+w) × [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectInstance {
    /// 1-based, in raster order of each instance's first pixel.
    pub id: usize,
    pub area: usize,
    pub bbox: BBox,
    /// Mean pixel coordinate `(x, y)`.
    pub centroid: [f64; 2],
    /// Count of member-pixel edges facing background or the image border.
    pub perimeter: usize,
    /// `4πA / P²`.
    pub circularity: f64,
    pub class: DefectClass,
}

impl DefectInstance {
    /// Longer over shorter bounding-box side.
    pub fn aspect_ratio(&self) -> f64 {
        self.bbox.w.max(self.bbox.h) as f64 / self.bbox.w.min(self.bbox.h) as f64
    }
}

/// 8-connected component labels (0 = background, components numbered from 1
/// in raster order of their first pixel) and the component count.
pub fn label_components(mask: &Mask) -> (Vec<u32>, usize) {
    let (w, h) = (mask.width(), mask.height());
    let data = mask.data();
    let mut labels = vec![0u32; w * h];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if data[start] == 0 || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (px, py) = ((p % w) as isize, (p / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (px + dx, py + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if data[q] == 1 && labels[q] == 0 {
                        labels[q] = count;
                        stack.push(q);
                    }
                }
            }
        }
    }
    (labels, count as usize)
}

/// One instance per 8-connected defect region, ordered by first pixel in
/// raster order. All classes start as `Unlabeled`.
pub fn extract_instances(mask: &Mask) -> Vec<DefectInstance> {
    let (w, h) = (mask.width(), mask.height());
    let (labels, count) = label_components(mask);
    struct Acc {
        area: usize,
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        sx: u64,
        sy: u64,
        edges: usize,
    }
    let mut acc: Vec<Acc> = (0..count)
        .map(|_| Acc { area: 0, x0: usize::MAX, y0: usize::MAX, x1: 0, y1: 0, sx: 0, sy: 0, edges: 0 })
        .collect();
    let is_defect = |x: isize, y: isize| x >= 0 && y >= 0 && x < w as isize && y < h as isize && mask.get(x as usize, y as usize);
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let a = &mut acc[l as usize - 1];
            a.area += 1;
            a.x0 = a.x0.min(x);
            a.y0 = a.y0.min(y);
            a.x1 = a.x1.max(x);
            a.y1 = a.y1.max(y);
            a.sx += x as u64;
            a.sy += y as u64;
            let (xi, yi) = (x as isize, y as isize);
            a.edges += [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .filter(|(dx, dy)| !is_defect(xi + dx, yi + dy))
                .count();
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(i, a)| {
            let p = a.edges as f64;
            DefectInstance {
                id: i + 1,
                area: a.area,
                bbox: BBox { x: a.x0, y: a.y0, w: a.x1 - a.x0 + 1, h: a.y1 - a.y0 + 1 },
                centroid: [a.sx as f64 / a.area as f64, a.sy as f64 / a.area as f64],
                perimeter: a.edges,
                circularity: 4.0 * std::f64::consts::PI * a.area as f64 / (p * p),
                class: DefectClass::Unlabeled,
            }
        })
        .collect()
}

/// Where the patch for one instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub instance_id: usize,
    /// Source window, always inside the image.
    pub window: BBox,
    /// True when the window content is resampled to 128×128.
    pub resize: bool,
    pub target: usize,
    pub path: Option<String>,
}

/// Small defects (bbox under 128 px on both axes) get a 128×128 window
/// centered on the rounded centroid and shifted inside the image; larger
/// ones get their bbox padded by 10 px, clamped, and resized to 128×128.
pub fn patch_window(instance: &DefectInstance, width: usize, height: usize) -> Result<PatchSpec> {
    if width < PATCH_SIZE || height < PATCH_SIZE {
        return Err(Error::ImageSmallerThanPatch { width, height });
    }
    let b = instance.bbox;
    if b.x + b.w > width || b.y + b.h > height {
        return Err(Error::InvalidInput(format!("instance {} lies outside {width}x{height}", instance.id)));
    }
    let half = (PATCH_SIZE / 2) as i64;
    let (window, resize) = if b.w < PATCH_SIZE && b.h < PATCH_SIZE {
        let place = |c: f64, extent: usize| (c.round() as i64 - half).clamp(0, (extent - PATCH_SIZE) as i64) as usize;
        let x = place(instance.centroid[0], width);
        let y = place(instance.centroid[1], height);
        (BBox { x, y, w: PATCH_SIZE, h: PATCH_SIZE }, false)
    } else {
        let x = b.x.saturating_sub(PATCH_PAD);
        let y = b.y.saturating_sub(PATCH_PAD);
        let x1 = (b.x + b.w + PATCH_PAD).min(width);
        let y1 = (b.y + b.h + PATCH_PAD).min(height);
        (BBox { x, y, w: x1 - x, h: y1 - y }, true)
    };
    Ok(PatchSpec { instance_id: instance.id, window, resize, target: PATCH_SIZE, path: None })
}

/// Bilinear resample with pixel centers at half-integer positions.
pub fn resize_bilinear(src: &Raster, out_w: usize, out_h: usize) -> Raster {
    let sx = src.width() as f64 / out_w as f64;
    let sy = src.height() as f64 / out_h as f64;
    let coord = |d: usize, scale: f64, n: usize| {
        let c = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = c.floor() as usize;
        (i0, (i0 + 1).min(n - 1), c - i0 as f64)
    };
    Raster::from_fn(out_w, out_h, |x, y| {
        let (x0, x1, fx) = coord(x, sx, src.width());
        let (y0, y1, fy) = coord(y, sy, src.height());
        let p = |xx, yy| src.get(xx, yy) as f64;
        let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
        let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
        (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8
    })
    .expect("non-empty target")
}

/// Cuts the 128×128 patch described by `spec` out of `image`.
pub fn extract_patch(image: &Raster, spec: &PatchSpec) -> Result<Raster> {
    let w = spec.window;
    let crop = image.crop(w.x, w.y, w.w, w.h)?;
    Ok(if spec.resize { resize_bilinear(&crop, spec.target, spec.target) } else { crop })
}

/// Porosity when circularity reaches `threshold`, lack of fusion below it,
/// unlabeled under four pixels.
pub fn classify_heuristic(instance: &DefectInstance, threshold: f64) -> DefectClass {
    if instance.area < MIN_CLASSIFY_AREA {
        DefectClass::Unlabeled
    } else if instance.circularity >= threshold {
        DefectClass::Porosity
    } else {
        DefectClass::LackOfFusion
    }
}

pub fn classify_all(instances: &mut [DefectInstance], threshold: f64) {
    for inst in instances {
        inst.class = classify_heuristic(inst, threshold);
    }
}

/// One row of an external label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub image_id: ImageId,
    pub instance_id: usize,
    pub class: String,
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRow>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Overwrites the classes named in `rows`; every row must reference an
/// existing instance and a known class.
pub fn apply_labels(instances: &mut BTreeMap<ImageId, Vec<DefectInstance>>, rows: &[LabelRow]) -> Result<()> {
    let mut parsed = Vec::with_capacity(rows.len());
    for row in rows {
        let class: DefectClass = row.class.parse()?;
        let found = instances
            .get(&row.image_id)
            .and_then(|list| list.iter().position(|i| i.id == row.instance_id));
        match found {
            Some(pos) => parsed.push((row.image_id.clone(), pos, class)),
            None => {
                return Err(Error::UnknownInstance { image_id: row.image_id.clone(), instance_id: row.instance_id })
            }
        }
    }
    for (image_id, pos, class) in parsed {
        instances.get_mut(&image_id).expect("checked above")[pos].class = class;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDefectStats {
    pub image_id: ImageId,
    pub defect_count: usize,
    pub defect_pixels: usize,
    pub total_pixels: usize,
    pub area_fraction: f64,
    /// Instances with a porosity or lack-of-fusion label.
    pub classified: usize,
    /// Count-weighted; both zero when nothing is classified.
    pub porosity_fraction: f64,
    pub lof_fraction: f64,
}

pub fn defect_stats(image_id: &str, instances: &[DefectInstance], width: usize, height: usize) -> ImageDefectStats {
    let defect_pixels: usize = instances.iter().map(|i| i.area).sum();
    let porosity = instances.iter().filter(|i| i.class == DefectClass::Porosity).count();
    let lof = instances.iter().filter(|i| i.class == DefectClass::LackOfFusion).count();
    let classified = porosity + lof;
    let total_pixels = width * height;
    let frac = |k: usize| if classified == 0 { 0.0 } else { k as f64 / classified as f64 };
    ImageDefectStats {
        image_id: image_id.to_string(),
        defect_count: instances.len(),
        defect_pixels,
        total_pixels,
        area_fraction: defect_pixels as f64 / total_pixels as f64,
        classified,
        porosity_fraction: frac(porosity),
        lof_fraction: frac(lof),
    }
}

/// Laser power (W) and scan speed (mm/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessCondition {
    pub power_w: f64,
    pub speed_mm_s: f64,
}

impl ProcessCondition {
    pub fn new(power_w: f64, speed_mm_s: f64) -> Result<Self> {
        if !(power_w > 0.0 && power_w.is_finite() && speed_mm_s > 0.0 && speed_mm_s.is_finite()) {
            return Err(Error::InvalidInput(format!("process condition ({power_w}, {speed_mm_s}) must be positive")));
        }
        Ok(Self { power_w, speed_mm_s })
    }
}

impl Eq for ProcessCondition {}

impl PartialOrd for ProcessCondition {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ProcessCondition {
    fn cmp(&self, other: &Self) -> Ordering {
        self.power_w.total_cmp(&other.power_w).then(self.speed_mm_s.total_cmp(&other.speed_mm_s))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConditionRow {
    image_id: ImageId,
    power_w: f64,
    speed_mm_s: f64,
}

pub fn read_conditions(path: impl AsRef<Path>) -> Result<BTreeMap<ImageId, ProcessCondition>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_path(path)?.deserialize::<ConditionRow>() {
        let row = row?;
        out.insert(row.image_id, ProcessCondition::new(row.power_w, row.speed_mm_s)?);
    }
    Ok(out)
}

pub fn write_conditions(path: impl AsRef<Path>, conditions: &BTreeMap<ImageId, ProcessCondition>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (id, c) in conditions {
        w.serialize(ConditionRow { image_id: id.clone(), power_w: c.power_w, speed_mm_s: c.speed_mm_s })?;
    }
    w.flush()?;
    Ok(())
}

/// Per-condition means over images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionAggregate {
    pub condition: ProcessCondition,
    pub images: usize,
    pub mean_count: f64,
    pub mean_area_fraction: f64,
    /// Class fractions are averaged over the images that have classified
    /// instances; zero when there are none.
    pub classified_images: usize,
    pub mean_porosity_fraction: f64,
    pub mean_lof_fraction: f64,
}

pub fn aggregate_by_condition(
    stats: &[ImageDefectStats],
    conditions: &BTreeMap<ImageId, ProcessCondition>,
) -> Result<Vec<ConditionAggregate>> {
    let mut groups: BTreeMap<ProcessCondition, Vec<&ImageDefectStats>> = BTreeMap::new();
    for s in stats {
        let c = conditions.get(&s.image_id).ok_or_else(|| Error::UnmappedImage(s.image_id.clone()))?;
        groups.entry(*c).or_default().push(s);
    }
    Ok(groups
        .into_iter()
        .map(|(condition, members)| {
            let n = members.len() as f64;
            let classified: Vec<_> = members.iter().filter(|s| s.classified > 0).collect();
            let nc = classified.len() as f64;
            let cmean = |f: fn(&ImageDefectStats) -> f64| {
                if classified.is_empty() {
                    0.0
                } else {
                    classified.iter().map(|s| f(s)).sum::<f64>() / nc
                }
            };
            ConditionAggregate {
                condition,
                images: members.len(),
                mean_count: members.iter().map(|s| s.defect_count as f64).sum::<f64>() / n,
                mean_area_fraction: members.iter().map(|s| s.area_fraction).sum::<f64>() / n,
                classified_images: classified.len(),
                mean_porosity_fraction: cmean(|s| s.porosity_fraction),
                mean_lof_fraction: cmean(|s| s.lof_fraction),
            }
        })
        .collect())
}

const CELL_W: f64 = 180.0;
const CELL_H: f64 = 110.0;
const MARGIN_L: f64 = 90.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const BAR_W: f64 = 140.0;
const BAR_H: f64 = 22.0;
const LOF_COLOR: &str = "#1f77b4";
const POROSITY_COLOR: &str = "#ff7f0e";
const AREA_COLOR: &str = "#555555";

/// Process map as (SVG, CSV). Rows are laser powers (highest on top),
/// columns scan speeds (ascending). Each cell has a stacked class-fraction
/// bar (lack of fusion, then porosity) and an area-fraction bar scaled to
/// the largest area fraction, annotated with the mean count in brackets.
pub fn emit_process_map(aggregates: &[ConditionAggregate]) -> Result<(String, String)> {
    if aggregates.is_empty() {
        return Err(Error::EmptyAggregates);
    }
    let mut powers: Vec<f64> = aggregates.iter().map(|a| a.condition.power_w).collect();
    let mut speeds: Vec<f64> = aggregates.iter().map(|a| a.condition.speed_mm_s).collect();
    powers.sort_by(|a, b| b.total_cmp(a));
    powers.dedup();
    speeds.sort_by(f64::total_cmp);
    speeds.dedup();
    let max_area = aggregates.iter().map(|a| a.mean_area_fraction).fold(0.0, f64::max);

    let width = MARGIN_L + CELL_W * speeds.len() as f64 + 20.0;
    let height = MARGIN_T + CELL_H * powers.len() as f64 + MARGIN_B;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" font-size="12"><tspan fill="{LOF_COLOR}">lack of fusion</tspan> / <tspan fill="{POROSITY_COLOR}">porosity</tspan> fraction; area fraction [mean count]</text>"#,
        MARGIN_L
    );
    for (r, p) in powers.iter().enumerate() {
        let y = MARGIN_T + CELL_H * r as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{p} W</text>"#, MARGIN_L - 8.0, y + CELL_H / 2.0);
    }
    for (c, s) in speeds.iter().enumerate() {
        let x = MARGIN_L + CELL_W * c as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{s} mm/s</text>"#,
            x + CELL_W / 2.0,
            MARGIN_T + CELL_H * powers.len() as f64 + 20.0
        );
    }
    for a in aggregates {
        let r = powers.iter().position(|&p| p == a.condition.power_w).expect("listed power");
        let c = speeds.iter().position(|&s| s == a.condition.speed_mm_s).expect("listed speed");
        let x = MARGIN_L + CELL_W * c as f64;
        let y = MARGIN_T + CELL_H * r as f64;
        let bx = x + (CELL_W - BAR_W) / 2.0;
        let _ = writeln!(
            svg,
            r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="none" stroke="#999999"/>"##
        );
        let lof_w = BAR_W * a.mean_lof_fraction;
        let por_w = BAR_W * a.mean_porosity_fraction;
        let by = y + 20.0;
        let _ = writeln!(svg, r#"<rect x="{bx:.3}" y="{by:.3}" width="{lof_w:.3}" height="{BAR_H}" fill="{LOF_COLOR}"/>"#);
        let _ = writeln!(
            svg,
            r#"<rect x="{:.3}" y="{by:.3}" width="{por_w:.3}" height="{BAR_H}" fill="{POROSITY_COLOR}"/>"#,
            bx + lof_w
        );
        let area_w = if max_area > 0.0 { BAR_W * a.mean_area_fraction / max_area } else { 0.0 };
        let by2 = by + BAR_H + 12.0;
        let _ = writeln!(svg, r#"<rect x="{bx:.3}" y="{by2:.3}" width="{area_w:.3}" height="{BAR_H}" fill="{AREA_COLOR}"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{bx:.3}" y="{:.3}">{:.3}% [{:.1}]</text>"#,
            by2 + BAR_H + 13.0,
            100.0 * a.mean_area_fraction,
            a.mean_count
        );
    }
    svg.push_str("</svg>\n");

    let mut csv = String::from(
        "power_w,speed_mm_s,images,mean_count,mean_area_fraction,classified_images,mean_porosity_fraction,mean_lof_fraction\n",
    );
    for a in aggregates {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            a.condition.power_w,
            a.condition.speed_mm_s,
            a.images,
            a.mean_count,
            a.mean_area_fraction,
            a.classified_images,
            a.mean_porosity_fraction,
            a.mean_lof_fraction
        );
    }
    Ok((svg, csv))
}

pub fn write_stats(path: impl AsRef<Path>, stats: &[ImageDefectStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in stats {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stats(path: impl AsRef<Path>) -> Result<Vec<ImageDefectStats>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut out = Vec::new();
    for row in csv::Reader::from_path(path)?.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceRow {
    image_id: ImageId,
    instance_id: usize,
    area: usize,
    bbox_x: usize,
    bbox_y: usize,
    bbox_w: usize,
    bbox_h: usize,
    centroid_x: f64,
    centroid_y: f64,
    perimeter: usize,
    circularity: f64,
    class: DefectClass,
}

pub fn write_instances(path: impl AsRef<Path>, instances: &BTreeMap<ImageId, Vec<DefectInstance>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (image_id, list) in instances {
        for i in list {
            w.serialize(InstanceRow {
                image_id: image_id.clone(),
                instance_id: i.id,
                area: i.area,
                bbox_x: i.bbox.x,
                bbox_y: i.bbox.y,
                bbox_w: i.bbox.w,
                bbox_h: i.bbox.h,
                centroid_x: i.centroid[0],
                centroid_y: i.centroid[1],
                perimeter: i.perimeter,
                circularity: i.circularity,
                class: i.class,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_instances(path: impl AsRef<Path>) -> Result<BTreeMap<ImageId, Vec<DefectInstance>>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut out: BTreeMap<ImageId, Vec<DefectInstance>> = BTreeMap::new();
    for row in csv::Reader::from_path(path)?.deserialize::<InstanceRow>() {
        let r = row?;
        out.entry(r.image_id).or_default().push(DefectInstance {
            id: r.instance_id,
            area: r.area,
            bbox: BBox { x: r.bbox_x, y: r.bbox_y, w: r.bbox_w, h: r.bbox_h },
            centroid: [r.centroid_x, r.centroid_y],
            perimeter: r.perimeter,
            circularity: r.circularity,
            class: r.class,
        });
    }
    Ok(out)
}
