//! Seeded synthetic slides and a ground-truth oracle classifier.
//!
//! Generated slides carry tissue pixels inside the HSV keep-band and
//! background/artifact pixels outside it. The planted tumor exists only in
//! the ground-truth record: pixel data is identical over tumor and plain
//! tissue, so detection must come from the classifier. The oracle classifier
//! scores tiles from the ground-truth polygon with configurable per-tile flip
//! noise, seeded by tile coordinates so scoring order does not matter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{convex_hull, Point2, Polygon};
use crate::imaging::{hsv_to_rgb, SlideRaster};
use crate::inference::{SlideLabel, TileScorer};
use crate::imaging::Tile;

/// Tissue color: comfortably interior to the HSV keep-band, also after 8-bit
/// quantization.
const TISSUE_HSV: (f64, f64, f64) = (0.575, 0.5, 0.7);
/// Background: bright, outside the value band.
const BACKGROUND_RGB: (u8, u8, u8) = (250, 250, 250);
/// Artifact palette: ink-like dark blob and a red marker smear, both outside
/// the keep-band.
const ARTIFACT_RGB: [(u8, u8, u8); 2] = [(40, 40, 60), (200, 60, 60)];

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform value in [0, 1) keyed by seed and tile coordinates.
pub fn tile_unit(seed: u64, x: u32, y: u32) -> f64 {
    let coord = ((x as u64) << 32) | y as u64;
    let h = splitmix64(seed ^ splitmix64(coord));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Specification of one synthetic slide.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub slide_id: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub mpp: f64,
    /// Fraction of pixels planted as tissue; the exact planted count is
    /// `round(density * width * height)`.
    pub tissue_density: f64,
    /// Convex tumor outline in pixel coordinates, or absent for a
    /// tumor-free slide.
    pub tumor: Option<Polygon>,
    pub artifact_count: u32,
}

/// A generated slide bundle: raster plus ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedSlide {
    pub slide_id: String,
    pub raster: SlideRaster,
    pub ground_truth: Option<Polygon>,
    pub label: SlideLabel,
    /// Exact number of tissue pixels planted.
    pub planted_tissue_pixels: u64,
}

/// Generates a slide deterministically from its spec.
pub fn generate_slide(spec: &SynthSpec) -> Result<GeneratedSlide> {
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::invalid("slide dimensions must be positive"));
    }
    if !(0.0..=1.0).contains(&spec.tissue_density) {
        return Err(Error::invalid("tissue density must be in [0,1]"));
    }
    if let Some(tumor) = &spec.tumor {
        if tumor.is_degenerate() {
            return Err(Error::invalid("tumor polygon is degenerate"));
        }
        let (lo, hi) = tumor.bbox();
        let inside_dims = lo.x >= 0.0
            && lo.y >= 0.0
            && hi.x <= spec.width as f64
            && hi.y <= spec.height as f64;
        if !inside_dims || spec.tissue_density == 0.0 {
            return Err(Error::TumorOutsideTissue);
        }
    }

    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut pixels = Vec::with_capacity(w * h * 3);
    for _ in 0..w * h {
        pixels.extend_from_slice(&[BACKGROUND_RGB.0, BACKGROUND_RGB.1, BACKGROUND_RGB.2]);
    }

    draw_artifacts(&mut pixels, spec);
    let planted = plant_tissue(&mut pixels, spec);

    let raster = SlideRaster::new(spec.width, spec.height, pixels, spec.mpp)?;
    let label = if spec.tumor.is_some() {
        SlideLabel::TumorPositive
    } else {
        SlideLabel::TumorNegative
    };
    Ok(GeneratedSlide {
        slide_id: spec.slide_id.clone(),
        raster,
        ground_truth: spec.tumor.clone(),
        label,
        planted_tissue_pixels: planted,
    })
}

fn draw_artifacts(pixels: &mut [u8], spec: &SynthSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(spec.seed ^ 0xA87F));
    let (w, h) = (spec.width as i64, spec.height as i64);
    for a in 0..spec.artifact_count {
        let cx = rng.random_range(0..w);
        let cy = rng.random_range(0..h);
        let radius = rng.random_range(8..=64i64);
        let color = ARTIFACT_RGB[a as usize % ARTIFACT_RGB.len()];
        for y in (cy - radius).max(0)..(cy + radius + 1).min(h) {
            for x in (cx - radius).max(0)..(cx + radius + 1).min(w) {
                let dx = x - cx;
                let dy = y - cy;
                if dx * dx + dy * dy <= radius * radius {
                    let i = ((y * w + x) * 3) as usize;
                    pixels[i] = color.0;
                    pixels[i + 1] = color.1;
                    pixels[i + 2] = color.2;
                }
            }
        }
    }
}

/// Plants exactly `round(density * w * h)` tissue pixels: the total is split
/// across rows evenly, and each row's columns are a seeded uniform draw.
/// Tissue overwrites artifacts, so artifact pixels never reduce the count.
fn plant_tissue(pixels: &mut [u8], spec: &SynthSpec) -> u64 {
    let (w, h) = (spec.width as u64, spec.height as u64);
    let total = ((w * h) as f64 * spec.tissue_density).round() as u64;
    let tissue = hsv_to_rgb(TISSUE_HSV.0, TISSUE_HSV.1, TISSUE_HSV.2);

    let mut planted = 0u64;
    let mut cols: Vec<u32> = Vec::with_capacity(spec.width as usize);
    for y in 0..h {
        let row_quota = ((y + 1) * total) / h - (y * total) / h;
        if row_quota == 0 {
            continue;
        }
        cols.clear();
        cols.extend(0..spec.width);
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(spec.seed ^ (y + 1)));
        // Partial Fisher-Yates: the first row_quota entries are the draw.
        for i in 0..row_quota as usize {
            let j = rng.random_range(i..cols.len());
            cols.swap(i, j);
        }
        for &x in &cols[..row_quota as usize] {
            let i = ((y * w + x as u64) * 3) as usize;
            pixels[i] = tissue.0;
            pixels[i + 1] = tissue.1;
            pixels[i + 2] = tissue.2;
            planted += 1;
        }
    }
    debug_assert_eq!(planted, total);
    planted
}

/// Oracle noise and decision configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Probability a tumor-free tile is flipped to positive.
    pub p_fp: f64,
    /// Probability a tumor-overlapping tile is flipped to negative.
    pub p_fn: f64,
    /// Minimum tile-area fraction covered by tumor to count as positive.
    pub overlap_rule: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            p_fp: 0.0,
            p_fn: 0.0,
            overlap_rule: 0.5,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p_fp", self.p_fp), ("p_fn", self.p_fn)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in [0,1], got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.overlap_rule) {
            return Err(Error::invalid("overlap_rule must be in [0,1]"));
        }
        Ok(())
    }
}

/// Ground-truth-backed classifier: a tile scores 1 when its tumor overlap
/// fraction reaches the overlap rule, then the result is flipped with the
/// configured noise probability. Flips are keyed by tile coordinates, so
/// scores are independent of scoring order and thread count.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    tumor: Option<Polygon>,
    cfg: OracleConfig,
}

impl OracleScorer {
    pub fn new(tumor: Option<Polygon>, cfg: OracleConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(OracleScorer { tumor, cfg })
    }

    fn geometric_positive(&self, tile: &Tile) -> bool {
        let Some(tumor) = &self.tumor else {
            return false;
        };
        let x0 = tile.x as f64;
        let y0 = tile.y as f64;
        let side = tile.side as f64;
        let clipped = tumor.clip_to_rect(x0, y0, x0 + side, y0 + side);
        clipped.area() / (side * side) >= self.cfg.overlap_rule
    }
}

impl TileScorer for OracleScorer {
    fn score(&self, _slide_id: &str, tile: &Tile) -> Result<f64> {
        let base = self.geometric_positive(tile);
        let u = tile_unit(self.cfg.seed, tile.x, tile.y);
        let flip = if base { u < self.cfg.p_fn } else { u < self.cfg.p_fp };
        Ok(if base != flip { 1.0 } else { 0.0 })
    }
}

/// Specification of a synthetic cohort.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub seed: u64,
    pub n_slides: u32,
    pub width: u32,
    pub height: u32,
    pub mpp: f64,
    pub tissue_density: f64,
    /// Fraction of slides left tumor-free; the count is rounded.
    pub tumor_free_fraction: f64,
    pub artifact_count: u32,
    /// Ellipse semi-axis range for planted tumors, pixels.
    pub tumor_radius_px: (f64, f64),
    /// Minimum tumor distance from the slide border, pixels.
    pub margin_px: f64,
    pub id_prefix: String,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            seed: 42,
            n_slides: 10,
            width: 4096,
            height: 4096,
            mpp: 8.0,
            tissue_density: 0.4,
            tumor_free_fraction: 0.3,
            artifact_count: 3,
            tumor_radius_px: (1100.0, 1600.0),
            margin_px: 100.0,
            id_prefix: "slide".into(),
        }
    }
}

/// Per-slide specifications for a cohort: which slides are tumor-free and
/// the tumor shapes derive deterministically from the cohort seed. Pixel
/// data can then be generated one slide at a time.
pub fn cohort_slide_specs(spec: &CohortSpec) -> Result<Vec<SynthSpec>> {
    if spec.n_slides == 0 {
        return Err(Error::invalid("cohort must contain at least one slide"));
    }
    if !(0.0..=1.0).contains(&spec.tumor_free_fraction) {
        return Err(Error::invalid("tumor-free fraction must be in [0,1]"));
    }
    let n = spec.n_slides as usize;
    let n_negative = (spec.tumor_free_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut master = ChaCha8Rng::seed_from_u64(splitmix64(spec.seed ^ 0xC080));
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut master);
    let negatives: std::collections::HashSet<usize> = order.into_iter().take(n_negative).collect();

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let slide_seed = splitmix64(spec.seed.wrapping_add(0x51D3 + i as u64));
        let tumor = if negatives.contains(&i) {
            None
        } else {
            Some(random_convex_tumor(spec, slide_seed)?)
        };
        out.push(SynthSpec {
            slide_id: format!("{}-{:03}", spec.id_prefix, i),
            seed: slide_seed,
            width: spec.width,
            height: spec.height,
            mpp: spec.mpp,
            tissue_density: spec.tissue_density,
            tumor,
            artifact_count: spec.artifact_count,
        });
    }
    Ok(out)
}

/// Generates the whole cohort in memory; for large cohorts prefer
/// [`cohort_slide_specs`] and [`generate_slide`] one slide at a time.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<GeneratedSlide>> {
    cohort_slide_specs(spec)?
        .iter()
        .map(generate_slide)
        .collect()
}

/// A random convex polygon: jittered points on a rotated ellipse, hulled.
fn random_convex_tumor(spec: &CohortSpec, seed: u64) -> Result<Polygon> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x7000));
    let (r_min, r_max) = spec.tumor_radius_px;
    if !(0.0 < r_min && r_min <= r_max) {
        return Err(Error::invalid("tumor radius range must be positive"));
    }
    let rx = rng.random_range(r_min..=r_max);
    let ry = rng.random_range(r_min..=r_max);
    let rot = rng.random_range(0.0..std::f64::consts::PI);
    let r_outer = rx.max(ry) + spec.margin_px;
    let (w, h) = (spec.width as f64, spec.height as f64);
    if 2.0 * r_outer >= w.min(h) {
        return Err(Error::invalid(
            "tumor radius plus margin exceeds the slide dimensions",
        ));
    }
    let cx = rng.random_range(r_outer..(w - r_outer));
    let cy = rng.random_range(r_outer..(h - r_outer));

    let k = 12 + rng.random_range(0..=4);
    let (sin_r, cos_r) = rot.sin_cos();
    let mut points = Vec::with_capacity(k);
    for j in 0..k {
        let jitter = (rng.random::<f64>() - 0.5) * 0.6;
        let a = std::f64::consts::TAU * (j as f64 + jitter) / k as f64;
        let ex = rx * a.cos();
        let ey = ry * a.sin();
        points.push(Point2::new(
            cx + ex * cos_r - ey * sin_r,
            cy + ex * sin_r + ey * cos_r,
        ));
    }
    convex_hull(&points)
}
