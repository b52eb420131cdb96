//! Rasters, masks, HSV thresholding, and tile grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Polygon};

/// An RGB raster at a fixed slide level, row-major, 8 bits per channel.
#[derive(Debug, Clone)]
pub struct SlideRaster {
    pub width: u32,
    pub height: u32,
    /// `width * height * 3` bytes, RGB interleaved.
    pub pixels: Vec<u8>,
    /// Microns per pixel at this raster's level.
    pub mpp: f64,
}

impl SlideRaster {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, mpp: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("raster dimensions must be positive"));
        }
        if !(mpp.is_finite() && mpp > 0.0) {
            return Err(Error::invalid(format!("mpp must be positive, got {mpp}")));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "pixel buffer is {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(SlideRaster {
            width,
            height,
            pixels,
            mpp,
        })
    }

    #[inline]
    pub fn rgb(&self, x: u32, y: u32) -> (u8, u8, u8) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        (self.pixels[i], self.pixels[i + 1], self.pixels[i + 2])
    }
}

/// A boolean grid over a slide. `cell_size` is the pixel side length of one
/// cell and `origin` the level-0 position of the grid's top-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
    pub cell_size: u32,
    pub origin: Point2,
}

impl BinaryMask {
    pub fn new_false(width: u32, height: u32, cell_size: u32, origin: Point2) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
            cell_size,
            origin,
        }
    }

    #[inline]
    pub fn get(&self, cx: u32, cy: u32) -> bool {
        self.bits[cy as usize * self.width as usize + cx as usize]
    }

    #[inline]
    pub fn set(&mut self, cx: u32, cy: u32, value: bool) {
        self.bits[cy as usize * self.width as usize + cx as usize] = value;
    }

    pub fn count_true(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Level-0 pixel center of a cell.
    pub fn cell_center(&self, cx: u32, cy: u32) -> Point2 {
        Point2::new(
            self.origin.x + (cx as f64 + 0.5) * self.cell_size as f64,
            self.origin.y + (cy as f64 + 0.5) * self.cell_size as f64,
        )
    }

    /// Centers of all true cells, row-major order.
    pub fn true_cell_centers(&self) -> Vec<Point2> {
        let mut out = Vec::new();
        for cy in 0..self.height {
            for cx in 0..self.width {
                if self.get(cx, cy) {
                    out.push(self.cell_center(cx, cy));
                }
            }
        }
        out
    }

    pub fn same_geometry(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.cell_size == other.cell_size
            && self.origin == other.origin
    }

    /// |A ∩ B|. Errors when grid geometries differ.
    pub fn intersection_count(&self, other: &BinaryMask) -> Result<u64> {
        self.check_geometry(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count() as u64)
    }

    /// |A ∪ B|. Errors when grid geometries differ.
    pub fn union_count(&self, other: &BinaryMask) -> Result<u64> {
        self.check_geometry(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a || b)
            .count() as u64)
    }

    fn check_geometry(&self, other: &BinaryMask) -> Result<()> {
        if !self.same_geometry(other) {
            return Err(Error::MaskGeometryMismatch(format!(
                "{}x{} cell {} origin ({}, {}) vs {}x{} cell {} origin ({}, {})",
                self.width,
                self.height,
                self.cell_size,
                self.origin.x,
                self.origin.y,
                other.width,
                other.height,
                other.cell_size,
                other.origin.x,
                other.origin.y,
            )));
        }
        Ok(())
    }
}

/// HSV keep-band for tissue. Bounds are strict inequalities; `keep_in_band`
/// selects whether in-band pixels are kept as tissue (the default reading)
/// or discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsvBounds {
    pub hue: (f64, f64),
    pub saturation_min: f64,
    pub value: (f64, f64),
    pub keep_in_band: bool,
}

impl Default for HsvBounds {
    fn default() -> Self {
        HsvBounds {
            hue: (0.5, 0.65),
            saturation_min: 0.1,
            value: (0.5, 0.9),
            keep_in_band: true,
        }
    }
}

impl HsvBounds {
    /// Whether a pixel with these HSV fractions counts as tissue.
    #[inline]
    pub fn is_tissue(&self, h: f64, s: f64, v: f64) -> bool {
        let in_band = h > self.hue.0
            && h < self.hue.1
            && s > self.saturation_min
            && v > self.value.0
            && v < self.value.1;
        in_band == self.keep_in_band
    }
}

/// Standard hexcone RGB -> HSV with all components as fractions.
/// `h` wraps in [0, 1); `s = 0` when max = 0; `h = 0` when s = 0.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let rf = r as f64 / 255.0;
    let gf = g as f64 / 255.0;
    let bf = b as f64 / 255.0;
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let delta = max - min;

    let v = max;
    let s = if max == 0.0 { 0.0 } else { delta / max };
    let h = if delta == 0.0 {
        0.0
    } else if max == rf {
        let mut h = (gf - bf) / delta / 6.0;
        if h < 0.0 {
            h += 1.0;
        }
        h
    } else if max == gf {
        ((bf - rf) / delta + 2.0) / 6.0
    } else {
        ((rf - gf) / delta + 4.0) / 6.0
    };
    (h % 1.0, s, v)
}

/// Hexcone HSV -> RGB, rounding to 8-bit channels.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let m = v - c;
    let (r1, g1, b1) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let q = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (q(r1), q(g1), q(b1))
}

/// Per-pixel tissue mask (cell_size = 1) from the HSV keep-band.
pub fn foreground_mask(slide: &SlideRaster, bounds: &HsvBounds) -> BinaryMask {
    let mut mask = BinaryMask::new_false(slide.width, slide.height, 1, Point2::new(0.0, 0.0));
    for y in 0..slide.height {
        for x in 0..slide.width {
            let (r, g, b) = slide.rgb(x, y);
            let (h, s, v) = rgb_to_hsv(r, g, b);
            if bounds.is_tissue(h, s, v) {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// A square tile at level-0 pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    /// Top-left corner.
    pub x: u32,
    pub y: u32,
    pub side: u32,
    pub foreground_ratio: f64,
}

/// Sliding-window tile placements covering a `width x height` raster.
///
/// Tiles sit at multiples of `stride`; when the last aligned placement does
/// not reach the raster edge, one extra row/column is clamped inward so every
/// pixel is covered at least once. Row-major order.
pub fn tile_grid(width: u32, height: u32, side: u32, stride: u32) -> Result<Vec<Tile>> {
    if side == 0 || stride == 0 {
        return Err(Error::invalid("side and stride must be positive"));
    }
    if stride > side {
        return Err(Error::UncoveredPixels { side, stride });
    }
    let xs = axis_placements(width, side, stride);
    let ys = axis_placements(height, side, stride);
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            tiles.push(Tile {
                x,
                y,
                side,
                foreground_ratio: 0.0,
            });
        }
    }
    Ok(tiles)
}

fn axis_placements(extent: u32, side: u32, stride: u32) -> Vec<u32> {
    if extent <= side {
        return vec![0];
    }
    let mut xs: Vec<u32> = (0..)
        .map(|i| i * stride)
        .take_while(|&x| x + side <= extent)
        .collect();
    let last = *xs.last().unwrap();
    if last + side < extent {
        xs.push(extent - side);
    }
    xs
}

/// Fraction of tissue cells under a tile footprint. The footprint is clipped
/// to the mask bounds; the fraction is over the clipped area.
pub fn tile_foreground_ratio(tile: &Tile, mask: &BinaryMask) -> f64 {
    debug_assert_eq!(mask.cell_size, 1, "foreground masks are per-pixel");
    let x0 = tile.x.min(mask.width);
    let y0 = tile.y.min(mask.height);
    let x1 = (tile.x + tile.side).min(mask.width);
    let y1 = (tile.y + tile.side).min(mask.height);
    let area = (x1 - x0) as u64 * (y1 - y0) as u64;
    if area == 0 {
        return 0.0;
    }
    let mut count = 0u64;
    for y in y0..y1 {
        for x in x0..x1 {
            if mask.get(x, y) {
                count += 1;
            }
        }
    }
    count as f64 / area as f64
}

/// Grid placement for rasterization: cell counts, cell size, and the level-0
/// origin of the top-left cell corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub origin: Point2,
    pub width: u32,
    pub height: u32,
    pub cell_size: u32,
}

impl GridGeometry {
    /// Grid aligned to multiples of `cell_size` that covers both polygons'
    /// bounding boxes. Alignment to the global cell lattice keeps cells
    /// comparable with heatmap-derived masks at the same cell size.
    pub fn covering(polys: &[&Polygon], cell_size: u32) -> Self {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for poly in polys {
            if poly.is_empty() {
                continue;
            }
            let (plo, phi) = poly.bbox();
            lo.x = lo.x.min(plo.x);
            lo.y = lo.y.min(plo.y);
            hi.x = hi.x.max(phi.x);
            hi.y = hi.y.max(phi.y);
        }
        if !lo.is_finite() {
            return GridGeometry {
                origin: Point2::new(0.0, 0.0),
                width: 0,
                height: 0,
                cell_size,
            };
        }
        let cs = cell_size as f64;
        let cx0 = (lo.x / cs).floor();
        let cy0 = (lo.y / cs).floor();
        let cx1 = (hi.x / cs).floor();
        let cy1 = (hi.y / cs).floor();
        GridGeometry {
            origin: Point2::new(cx0 * cs, cy0 * cs),
            width: (cx1 - cx0 + 1.0).max(0.0) as u32,
            height: (cy1 - cy0 + 1.0).max(0.0) as u32,
            cell_size,
        }
    }
}

/// Rasterizes a polygon onto a cell grid: a cell is true iff its center lies
/// inside the polygon (even-odd rule). Degenerate polygons give an all-false
/// mask.
pub fn rasterize_polygon(poly: &Polygon, geom: &GridGeometry) -> BinaryMask {
    let mut mask = BinaryMask::new_false(geom.width, geom.height, geom.cell_size, geom.origin);
    if poly.is_degenerate() {
        return mask;
    }
    let (lo, hi) = poly.bbox();
    let cs = geom.cell_size as f64;
    // Restrict the scan to cells whose centers can fall inside the bbox.
    let cx_min = (((lo.x - geom.origin.x) / cs - 0.5).floor().max(0.0)) as u32;
    let cy_min = (((lo.y - geom.origin.y) / cs - 0.5).floor().max(0.0)) as u32;
    let cx_max = ((((hi.x - geom.origin.x) / cs - 0.5).ceil()).max(0.0) as u32).min(
        geom.width.saturating_sub(1),
    );
    let cy_max = ((((hi.y - geom.origin.y) / cs - 0.5).ceil()).max(0.0) as u32).min(
        geom.height.saturating_sub(1),
    );
    if geom.width == 0 || geom.height == 0 {
        return mask;
    }
    for cy in cy_min..=cy_max {
        for cx in cx_min..=cx_max {
            if poly.contains(mask.cell_center(cx, cy)) {
                mask.set(cx, cy, true);
            }
        }
    }
    mask
}
