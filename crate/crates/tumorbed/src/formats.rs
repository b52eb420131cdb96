//! On-disk formats: slide bundles, polygon documents, score files, feature
//! files, sample plans, prediction records, and reports.
//!
//! Everything is deterministic: JSON field order follows struct order, images
//! are PNG-encoded from canonical buffers, and all writes go through a
//! temp-file-and-rename so partially written artifacts never appear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Polygon, TumorBedExtent};
use crate::inference::{PipelineParams, SlideLabel, SlidePrediction};
use crate::mining::{FeatureMatrix, PatchId, SamplePlan, SamplingStrategy};

#[cfg(not(target_arch = "wasm32"))]
use std::path::{Path, PathBuf};

/// Polygon document: slide id, microns per pixel, and the vertex ring as
/// (x, y) level-0 pixel pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolygonDoc {
    pub slide_id: String,
    pub mpp: f64,
    pub vertices: Vec<[f64; 2]>,
}

impl PolygonDoc {
    pub fn from_polygon(slide_id: &str, mpp: f64, poly: &Polygon) -> Self {
        PolygonDoc {
            slide_id: slide_id.to_string(),
            mpp,
            vertices: poly.vertices().iter().map(|p| [p.x, p.y]).collect(),
        }
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon::new(
            self.vertices
                .iter()
                .map(|&[x, y]| Point2::new(x, y))
                .collect(),
        )
    }
}

/// Sidecar metadata for a slide raster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlideMeta {
    pub slide_id: String,
    /// Microns per pixel at the stored level.
    pub mpp: f64,
    /// Downsample factor of the stored level relative to level 0.
    #[serde(default = "default_downsample")]
    pub level_downsample: f64,
    pub width: u32,
    pub height: u32,
    /// Image file name, relative to the metadata document.
    pub image: String,
}

fn default_downsample() -> f64 {
    1.0
}

/// One slide in a cohort manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub slide_id: String,
    pub label: SlideLabel,
    pub meta: String,
    /// Ground-truth polygon document, present for tumor-positive slides.
    pub ground_truth: Option<String>,
}

/// Cohort manifest written next to generated slide bundles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub slides: Vec<ManifestEntry>,
}

/// Per-slide prediction artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionDoc {
    pub slide_id: String,
    pub label: SlideLabel,
    pub params: PipelineParams,
    pub hull: Option<Vec<[f64; 2]>>,
    pub extent: Option<TumorBedExtent>,
}

impl PredictionDoc {
    pub fn from_prediction(pred: &SlidePrediction, params: &PipelineParams) -> Self {
        PredictionDoc {
            slide_id: pred.slide_id.clone(),
            label: pred.label,
            params: params.clone(),
            hull: pred
                .hull
                .as_ref()
                .map(|h| h.vertices().iter().map(|p| [p.x, p.y]).collect()),
            extent: pred.extent.clone(),
        }
    }

    pub fn hull_polygon(&self) -> Option<Polygon> {
        self.hull.as_ref().map(|v| {
            Polygon::new(v.iter().map(|&[x, y]| Point2::new(x, y)).collect())
        })
    }
}

/// Sidecar for exported heatmap and mask images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RasterMeta {
    pub cell_size: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

// ---------------------------------------------------------------------------
// Score files: one record per tile, `x y side p_tumor`.
// ---------------------------------------------------------------------------

/// Tile position key `(x, y, side)` with its probability.
pub type ScoreRecord = ((u32, u32, u32), f64);

/// Parses a score file. Blank lines and `#` comments are allowed.
pub fn parse_score_file(text: &str) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::format(format!(
                "score file line {}: expected `x y side p`, got {} fields",
                lineno + 1,
                fields.len()
            )));
        }
        let parse_u32 = |s: &str, what: &str| {
            s.parse::<u32>().map_err(|_| {
                Error::format(format!("score file line {}: bad {what} `{s}`", lineno + 1))
            })
        };
        let x = parse_u32(fields[0], "x")?;
        let y = parse_u32(fields[1], "y")?;
        let side = parse_u32(fields[2], "side")?;
        let p: f64 = fields[3].parse().map_err(|_| {
            Error::format(format!(
                "score file line {}: bad probability `{}`",
                lineno + 1,
                fields[3]
            ))
        })?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::format(format!(
                "score file line {}: probability {p} outside [0,1]",
                lineno + 1
            )));
        }
        out.push(((x, y, side), p));
    }
    Ok(out)
}

pub fn render_score_file(records: &[ScoreRecord]) -> String {
    let mut s = String::from("# x y side p_tumor\n");
    for ((x, y, side), p) in records {
        s.push_str(&format!("{x} {y} {side} {p}\n"));
    }
    s
}

// ---------------------------------------------------------------------------
// Feature files: binary header + little-endian f32 matrix + id table.
// ---------------------------------------------------------------------------

const FEATURE_MAGIC: &[u8; 4] = b"TBFT";
const FEATURE_VERSION: u32 = 1;

/// Serializes a feature matrix into the binary feature-file format:
/// magic `TBFT`, version u32, n u64, d u32 (all little-endian), then
/// `n * d` f32 values row-major, then `n` id lines `slide-id x y`.
pub fn encode_feature_file(features: &FeatureMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(20 + features.values().len() * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(features.n() as u64).to_le_bytes());
    buf.extend_from_slice(&(features.d() as u32).to_le_bytes());
    for v in features.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for id in features.ids() {
        buf.extend_from_slice(format!("{} {} {}\n", id.slide_id, id.x, id.y).as_bytes());
    }
    buf
}

/// Parses the binary feature-file format; malformed input reports the byte
/// offset of the failure.
pub fn decode_feature_file(bytes: &[u8]) -> Result<FeatureMatrix> {
    let need = |offset: usize, len: usize, what: &str| -> Result<()> {
        if offset + len > bytes.len() {
            return Err(Error::Malformed {
                offset: bytes.len() as u64,
                reason: format!("truncated while reading {what} (need {len} bytes at {offset})"),
            });
        }
        Ok(())
    };

    need(0, 4, "magic")?;
    if &bytes[0..4] != FEATURE_MAGIC {
        return Err(Error::Malformed {
            offset: 0,
            reason: format!("bad magic {:?}, expected {FEATURE_MAGIC:?}", &bytes[0..4]),
        });
    }
    need(4, 4, "version")?;
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(Error::Malformed {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    need(8, 8, "row count")?;
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    need(16, 4, "dimension")?;
    let d = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;

    let matrix_bytes = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(4))
        .ok_or(Error::Malformed {
            offset: 8,
            reason: format!("n = {n}, d = {d} overflows the matrix size"),
        })?;
    need(20, matrix_bytes, "feature matrix")?;
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n * d {
        let at = 20 + i * 4;
        values.push(f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()));
    }

    let table_start = 20 + matrix_bytes;
    let table = std::str::from_utf8(&bytes[table_start..]).map_err(|e| Error::Malformed {
        offset: (table_start + e.valid_up_to()) as u64,
        reason: "id table is not valid UTF-8".into(),
    })?;
    let mut ids = Vec::with_capacity(n);
    let mut offset = table_start as u64;
    for line in table.lines() {
        let line_len = line.len() as u64 + 1;
        if ids.len() == n {
            break;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Malformed {
                offset,
                reason: format!("id line needs `slide-id x y`, got `{line}`"),
            });
        }
        let x = fields[1].parse().map_err(|_| Error::Malformed {
            offset,
            reason: format!("bad x `{}`", fields[1]),
        })?;
        let y = fields[2].parse().map_err(|_| Error::Malformed {
            offset,
            reason: format!("bad y `{}`", fields[2]),
        })?;
        ids.push(PatchId {
            slide_id: fields[0].to_string(),
            x,
            y,
        });
        offset += line_len;
    }
    if ids.len() != n {
        return Err(Error::Malformed {
            offset: bytes.len() as u64,
            reason: format!("id table has {} rows, expected {n}", ids.len()),
        });
    }
    FeatureMatrix::new(n, d, values, ids)
}

// ---------------------------------------------------------------------------
// Sample plans: strategy header plus one id per line.
// ---------------------------------------------------------------------------

pub fn render_plan(plan: &SamplePlan) -> String {
    let mut s = format!(
        "# strategy={} seed={} count={}\n",
        plan.strategy,
        plan.seed,
        plan.selected.len()
    );
    if let Some((neg, pos)) = plan.multiplicities {
        s.push_str(&format!("# multiplicities neg={neg} pos={pos}\n"));
    }
    for id in &plan.selected {
        s.push_str(&format!("{} {} {}\n", id.slide_id, id.x, id.y));
    }
    s
}

pub fn parse_plan(text: &str) -> Result<SamplePlan> {
    let mut strategy = None;
    let mut seed = 0u64;
    let mut selected = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for kv in rest.split_whitespace() {
                match kv.split_once('=') {
                    Some(("strategy", v)) => {
                        strategy = Some(match v {
                            "kmeans" => SamplingStrategy::KMeans,
                            "random" => SamplingStrategy::Random,
                            "none" => SamplingStrategy::None,
                            other => {
                                return Err(Error::format(format!(
                                    "unknown strategy `{other}`"
                                )))
                            }
                        });
                    }
                    Some(("seed", v)) => {
                        seed = v.parse().map_err(|_| {
                            Error::format(format!("bad seed `{v}` in plan header"))
                        })?;
                    }
                    _ => {}
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::format(format!(
                "plan line {}: expected `slide-id x y`",
                lineno + 1
            )));
        }
        selected.push(PatchId {
            slide_id: fields[0].to_string(),
            x: fields[1]
                .parse()
                .map_err(|_| Error::format(format!("plan line {}: bad x", lineno + 1)))?,
            y: fields[2]
                .parse()
                .map_err(|_| Error::format(format!("plan line {}: bad y", lineno + 1)))?,
        });
    }
    Ok(SamplePlan {
        strategy: strategy
            .ok_or_else(|| Error::format("plan file missing `# strategy=...` header"))?,
        seed,
        selected,
        multiplicities: None,
        loss_weights: None,
    })
}

// ---------------------------------------------------------------------------
// Report rendering.
// ---------------------------------------------------------------------------

/// Human-readable report table: confusion cells in row-gt / col-pred order,
/// then the segmentation means.
pub fn render_report_table(report: &crate::metrics::EvalReport) -> String {
    let m = &report.matrix;
    let mut s = String::new();
    s.push_str("slide-level confusion (rows: ground truth, cols: prediction)\n");
    s.push_str("                 pred-negative  pred-positive\n");
    s.push_str(&format!("  gt-negative  {:>14} {:>14}\n", m.tn, m.fp));
    s.push_str(&format!("  gt-positive  {:>14} {:>14}\n", m.fn_, m.tp));
    match m.accuracy() {
        Some(acc) => s.push_str(&format!("accuracy: {:.2}%\n", acc * 100.0)),
        None => s.push_str("accuracy: undefined (empty cohort)\n"),
    }
    match (report.mean_dice, report.mean_dprim_error_mm) {
        (Some(dice), Some(err)) => {
            s.push_str(&format!(
                "mean dice: {dice:.4}   mean d_prim error: {err:.4} mm   \
                 (over {} slides; {} gt-positive excluded)\n",
                report.n_included, report.n_excluded
            ));
        }
        _ => s.push_str(&format!(
            "segmentation metrics: none included ({} gt-positive excluded)\n",
            report.n_excluded
        )),
    }
    s.push_str("per-slide:\n");
    s.push_str("  slide-id              gt              pred            dice    d_prim_err_mm\n");
    for e in &report.slides {
        let dice = e
            .dice
            .map_or("-".to_string(), |d| format!("{d:.4}"));
        let err = e
            .dprim_error_mm
            .map_or("-".to_string(), |d| format!("{d:.4}"));
        s.push_str(&format!(
            "  {:<20}  {:<14}  {:<14}  {:>6}  {:>13}\n",
            e.slide_id,
            e.gt_label.to_string(),
            e.pred_label.to_string(),
            dice,
            err
        ));
    }
    s
}

// ---------------------------------------------------------------------------
// Filesystem I/O (not available on wasm targets).
// ---------------------------------------------------------------------------

/// Writes bytes atomically: temp file in the same directory, then rename.
#[cfg(not(target_arch = "wasm32"))]
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(not(target_arch = "wasm32"))]
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

#[cfg(not(target_arch = "wasm32"))]
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(not(target_arch = "wasm32"))]
mod slide_io {
    use super::*;
    use crate::imaging::{BinaryMask, SlideRaster};
    use crate::inference::Heatmap;
    use image::{GrayImage, ImageFormat, RgbImage};
    use std::io::Cursor;

    /// Writes `<id>.png` and `<id>.meta.json` into `dir`.
    pub fn write_slide_bundle(dir: &Path, slide_id: &str, raster: &SlideRaster) -> Result<SlideMeta> {
        let image_name = format!("{slide_id}.png");
        let img = RgbImage::from_raw(raster.width, raster.height, raster.pixels.clone())
            .ok_or_else(|| Error::format("raster buffer does not match its dimensions"))?;
        let mut buf = Vec::new();
        img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Png)
            .map_err(|e| Error::format(format!("png encode: {e}")))?;
        atomic_write(&dir.join(&image_name), &buf)?;

        let meta = SlideMeta {
            slide_id: slide_id.to_string(),
            mpp: raster.mpp,
            level_downsample: 1.0,
            width: raster.width,
            height: raster.height,
            image: image_name,
        };
        write_json(&dir.join(format!("{slide_id}.meta.json")), &meta)?;
        Ok(meta)
    }

    /// Loads a slide bundle from its metadata document.
    pub fn read_slide_bundle(meta_path: &Path) -> Result<(SlideMeta, SlideRaster)> {
        let meta: SlideMeta = read_json(meta_path)?;
        let image_path = meta_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&meta.image);
        let img = image::open(&image_path)
            .map_err(|e| Error::format(format!("{}: {e}", image_path.display())))?
            .to_rgb8();
        if img.width() != meta.width || img.height() != meta.height {
            return Err(Error::format(format!(
                "{}: image is {}x{}, metadata says {}x{}",
                image_path.display(),
                img.width(),
                img.height(),
                meta.width,
                meta.height
            )));
        }
        let raster = SlideRaster::new(meta.width, meta.height, img.into_raw(), meta.mpp)?;
        Ok((meta, raster))
    }

    /// Heatmap of cell means as an 8-bit grayscale PNG (mean * 255, rounded).
    pub fn write_heatmap_image(path: &Path, map: &Heatmap) -> Result<()> {
        let mut img = GrayImage::new(map.width.max(1), map.height.max(1));
        for cy in 0..map.height {
            for cx in 0..map.width {
                let v = (map.mean(cx, cy) * 255.0).round().clamp(0.0, 255.0) as u8;
                img.put_pixel(cx, cy, image::Luma([v]));
            }
        }
        write_gray(path, &img)
    }

    /// Mask as an 8-bit grayscale PNG, 255 = true.
    pub fn write_mask_image(path: &Path, mask: &BinaryMask) -> Result<()> {
        let mut img = GrayImage::new(mask.width.max(1), mask.height.max(1));
        for cy in 0..mask.height {
            for cx in 0..mask.width {
                img.put_pixel(cx, cy, image::Luma([if mask.get(cx, cy) { 255 } else { 0 }]));
            }
        }
        write_gray(path, &img)
    }

    fn write_gray(path: &Path, img: &GrayImage) -> Result<()> {
        let mut buf = Vec::new();
        img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Png)
            .map_err(|e| Error::format(format!("png encode: {e}")))?;
        atomic_write(path, &buf)
    }
}

#[cfg(not(target_arch = "wasm32"))]
pub use slide_io::{read_slide_bundle, write_heatmap_image, write_mask_image, write_slide_bundle};
