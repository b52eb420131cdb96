//! Tile scoring, stride-vote heatmaps, and tumor bed prediction.
//!
//! Each tile fully inside the slide is scored by a pluggable classifier with
//! the probability of containing tumor. Scoring a grid with stride smaller
//! than the tile side yields several votes per pixel (four for side 512 and
//! stride 256); votes are averaged per heatmap cell. The thresholded heatmap
//! gives the slide label and, when positive, the convex hull of the true
//! cells' centers is the predicted tumor bed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point2, Polygon, TumorBedExtent};
use crate::imaging::{
    foreground_mask, tile_foreground_ratio, tile_grid, BinaryMask, HsvBounds, SlideRaster, Tile,
};

/// Pipeline knobs with the reference defaults: 512 px tiles, stride 256,
/// binarization threshold 0.5, and a 25% foreground gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub side: u32,
    pub stride: u32,
    /// Heatmap binarization threshold (inclusive).
    pub tau: f64,
    /// Minimum tile foreground ratio required for scoring.
    pub foreground_threshold: f64,
    pub hsv: HsvBounds,
    /// Heatmap cell size in pixels; defaults to the stride.
    pub cell_size: Option<u32>,
    /// Worker threads for tile scoring; 0 picks the available parallelism.
    pub workers: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            side: 512,
            stride: 256,
            tau: 0.5,
            foreground_threshold: 0.25,
            hsv: HsvBounds::default(),
            cell_size: None,
            workers: 0,
        }
    }
}

impl PipelineParams {
    pub fn effective_cell_size(&self) -> u32 {
        self.cell_size.unwrap_or(self.stride)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::invalid(format!("tau must be in [0,1], got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.foreground_threshold) {
            return Err(Error::invalid("foreground threshold must be in [0,1]"));
        }
        if self.stride == 0 || self.side == 0 {
            return Err(Error::invalid("side and stride must be positive"));
        }
        if self.stride > self.side {
            return Err(Error::UncoveredPixels {
                side: self.side,
                stride: self.stride,
            });
        }
        let cs = self.effective_cell_size();
        if cs == 0 || !self.stride.is_multiple_of(cs) {
            return Err(Error::invalid(format!(
                "cell size {cs} must divide stride {}",
                self.stride
            )));
        }
        Ok(())
    }
}

/// A scored tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchScore {
    pub tile: Tile,
    pub p_tumor: f64,
}

/// A patch classifier. Implementations must be deterministic for a fixed
/// configuration and safe to call from several threads.
pub trait TileScorer: Sync {
    /// Probability in [0, 1] that the tile contains tumor.
    fn score(&self, slide_id: &str, tile: &Tile) -> Result<f64>;
}

/// Scores the tiles whose foreground ratio passes the gate; skipped tiles
/// produce no score. Output order follows the input order of scored tiles.
pub fn score_tiles<S: TileScorer + ?Sized>(
    slide_id: &str,
    scorer: &S,
    tiles: &[Tile],
    foreground_threshold: f64,
    workers: usize,
) -> Result<Vec<PatchScore>> {
    let kept: Vec<Tile> = tiles
        .iter()
        .filter(|t| t.foreground_ratio >= foreground_threshold)
        .copied()
        .collect();
    let scores = score_all(slide_id, scorer, &kept, workers)?;
    Ok(kept
        .into_iter()
        .zip(scores)
        .map(|(tile, p_tumor)| PatchScore { tile, p_tumor })
        .collect())
}

#[cfg(not(target_arch = "wasm32"))]
fn score_all<S: TileScorer + ?Sized>(
    slide_id: &str,
    scorer: &S,
    tiles: &[Tile],
    workers: usize,
) -> Result<Vec<f64>> {
    let workers = if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    };
    if workers <= 1 || tiles.len() < 2 {
        return tiles.iter().map(|t| checked_score(slide_id, scorer, t)).collect();
    }
    let chunk = tiles.len().div_ceil(workers);
    let mut results: Vec<Result<Vec<f64>>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = tiles
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|t| checked_score(slide_id, scorer, t))
                        .collect::<Result<Vec<f64>>>()
                })
            })
            .collect();
        for h in handles {
            results.push(h.join().expect("scoring worker panicked"));
        }
    });
    let mut out = Vec::with_capacity(tiles.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

#[cfg(target_arch = "wasm32")]
fn score_all<S: TileScorer + ?Sized>(
    slide_id: &str,
    scorer: &S,
    tiles: &[Tile],
    _workers: usize,
) -> Result<Vec<f64>> {
    tiles.iter().map(|t| checked_score(slide_id, scorer, t)).collect()
}

fn checked_score<S: TileScorer + ?Sized>(slide_id: &str, scorer: &S, tile: &Tile) -> Result<f64> {
    let p = scorer.score(slide_id, tile)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Classifier {
            x: tile.x,
            y: tile.y,
            reason: format!("probability {p} outside [0,1]"),
        });
    }
    Ok(p)
}

/// Per-cell vote accumulator over a slide.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: u32,
    pub height: u32,
    pub cell_size: u32,
    pub origin: Point2,
    vote_sum: Vec<f64>,
    vote_count: Vec<u32>,
}

impl Heatmap {
    pub fn new(width: u32, height: u32, cell_size: u32) -> Self {
        let n = width as usize * height as usize;
        Heatmap {
            width,
            height,
            cell_size,
            origin: Point2::new(0.0, 0.0),
            vote_sum: vec![0.0; n],
            vote_count: vec![0; n],
        }
    }

    #[inline]
    fn idx(&self, cx: u32, cy: u32) -> usize {
        cy as usize * self.width as usize + cx as usize
    }

    pub fn vote_count(&self, cx: u32, cy: u32) -> u32 {
        self.vote_count[self.idx(cx, cy)]
    }

    pub fn vote_sum(&self, cx: u32, cy: u32) -> f64 {
        self.vote_sum[self.idx(cx, cy)]
    }

    /// Mean vote, or 0 for cells that received none.
    pub fn mean(&self, cx: u32, cy: u32) -> f64 {
        let i = self.idx(cx, cy);
        if self.vote_count[i] == 0 {
            0.0
        } else {
            self.vote_sum[i] / self.vote_count[i] as f64
        }
    }
}

/// Accumulates patch scores into a heatmap at `cell_size` resolution over a
/// `width x height` pixel slide.
///
/// Every cell a tile overlaps receives the tile's probability as one vote.
/// Scores are folded in a canonical tile order, so the result is bit-identical
/// under any permutation of the input.
pub fn accumulate_heatmap(
    scores: &[PatchScore],
    width: u32,
    height: u32,
    cell_size: u32,
) -> Result<Heatmap> {
    if cell_size == 0 {
        return Err(Error::invalid("cell size must be positive"));
    }
    let cells_w = width.div_ceil(cell_size);
    let cells_h = height.div_ceil(cell_size);
    let mut map = Heatmap::new(cells_w, cells_h, cell_size);

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by_key(|&i| {
        let s = &scores[i];
        (s.tile.y, s.tile.x, s.tile.side, s.p_tumor.to_bits())
    });

    for i in order {
        let s = &scores[i];
        let t = &s.tile;
        if t.x + t.side > width || t.y + t.side > height {
            return Err(Error::TileOutOfBounds {
                x: t.x,
                y: t.y,
                side: t.side,
                width,
                height,
            });
        }
        let cx0 = t.x / cell_size;
        let cy0 = t.y / cell_size;
        let cx1 = (t.x + t.side - 1) / cell_size;
        let cy1 = (t.y + t.side - 1) / cell_size;
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                let i = map.idx(cx, cy);
                map.vote_sum[i] += s.p_tumor;
                map.vote_count[i] += 1;
            }
        }
    }
    Ok(map)
}

/// Binarizes a heatmap: a cell is true iff it received votes and its mean is
/// at least `tau`. Unscored cells are negative.
pub fn threshold_heatmap(map: &Heatmap, tau: f64) -> BinaryMask {
    let mut mask = BinaryMask::new_false(map.width, map.height, map.cell_size, map.origin);
    for cy in 0..map.height {
        for cx in 0..map.width {
            if map.vote_count(cx, cy) > 0 && map.mean(cx, cy) >= tau {
                mask.set(cx, cy, true);
            }
        }
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlideLabel {
    TumorPositive,
    TumorNegative,
}

impl SlideLabel {
    pub fn is_positive(&self) -> bool {
        matches!(self, SlideLabel::TumorPositive)
    }
}

impl std::fmt::Display for SlideLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SlideLabel::TumorPositive => write!(f, "tumor-positive"),
            SlideLabel::TumorNegative => write!(f, "tumor-negative"),
        }
    }
}

/// One or more positive cells makes the slide tumor-positive.
pub fn slide_label(mask: &BinaryMask) -> SlideLabel {
    if mask.any() {
        SlideLabel::TumorPositive
    } else {
        SlideLabel::TumorNegative
    }
}

/// Full prediction output for one slide.
#[derive(Debug, Clone)]
pub struct SlidePrediction {
    pub slide_id: String,
    pub label: SlideLabel,
    pub heatmap: Heatmap,
    pub mask: BinaryMask,
    /// Convex hull of true-cell centers; present iff the label is positive.
    pub hull: Option<Polygon>,
    /// Absent when the slide is negative or the positive cells are too
    /// degenerate (fewer than three non-collinear) for a measurable bed.
    pub extent: Option<TumorBedExtent>,
}

/// Runs the whole pipeline on one slide: foreground gating, tile scoring,
/// stride-vote accumulation, thresholding, labeling, and bed extraction.
pub fn predict_tumor_bed<S: TileScorer + ?Sized>(
    slide_id: &str,
    slide: &SlideRaster,
    scorer: &S,
    params: &PipelineParams,
) -> Result<SlidePrediction> {
    params.validate()?;
    let fg = foreground_mask(slide, &params.hsv);
    let mut tiles = tile_grid(slide.width, slide.height, params.side, params.stride)?;
    for tile in &mut tiles {
        tile.foreground_ratio = tile_foreground_ratio(tile, &fg);
    }
    let scores = score_tiles(
        slide_id,
        scorer,
        &tiles,
        params.foreground_threshold,
        params.workers,
    )?;
    let heatmap = accumulate_heatmap(
        &scores,
        slide.width,
        slide.height,
        params.effective_cell_size(),
    )?;
    let mask = threshold_heatmap(&heatmap, params.tau);
    let label = slide_label(&mask);

    let (hull, extent) = if label.is_positive() {
        let hull = geometry::convex_hull(&mask.true_cell_centers())?;
        let extent = match geometry::extent_of_hull(&hull, slide.mpp) {
            Ok(e) => Some(e),
            Err(Error::ExtentUndefined) => None,
            Err(e) => return Err(e),
        };
        (Some(hull), extent)
    } else {
        (None, None)
    };

    Ok(SlidePrediction {
        slide_id: slide_id.to_string(),
        label,
        heatmap,
        mask,
        hull,
        extent,
    })
}

/// Score lookup keyed by tile position, the in-memory form of the score-file
/// classifier.
#[derive(Debug, Clone, Default)]
pub struct ScoreMapScorer {
    scores: std::collections::HashMap<(u32, u32, u32), f64>,
}

impl ScoreMapScorer {
    pub fn new(records: impl IntoIterator<Item = ((u32, u32, u32), f64)>) -> Self {
        ScoreMapScorer {
            scores: records.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl TileScorer for ScoreMapScorer {
    fn score(&self, _slide_id: &str, tile: &Tile) -> Result<f64> {
        self.scores
            .get(&(tile.x, tile.y, tile.side))
            .copied()
            .ok_or(Error::Classifier {
                x: tile.x,
                y: tile.y,
                reason: "no score on file for this tile".into(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct ConstScorer(f64);

    impl TileScorer for ConstScorer {
        fn score(&self, _slide_id: &str, _tile: &Tile) -> Result<f64> {
            Ok(self.0)
        }
    }

    fn tile(x: u32, y: u32, side: u32) -> Tile {
        Tile {
            x,
            y,
            side,
            foreground_ratio: 1.0,
        }
    }

    #[test]
    fn score_tiles_skips_background() {
        let tiles = vec![
            Tile {
                foreground_ratio: 0.0,
                ..tile(0, 0, 64)
            },
            Tile {
                foreground_ratio: 0.3,
                ..tile(64, 0, 64)
            },
            Tile {
                foreground_ratio: 0.25,
                ..tile(128, 0, 64)
            },
        ];
        let scores = score_tiles("s", &ConstScorer(0.8), &tiles, 0.25, 1).unwrap();
        // The gate is inclusive: ratio 0.25 passes, 0.0 does not.
        assert_eq!(scores.len(), 2);
        assert_eq!(scores[0].tile.x, 64);
        assert_eq!(scores[1].tile.x, 128);
    }

    #[test]
    fn score_tiles_all_background_empty() {
        let tiles = vec![Tile {
            foreground_ratio: 0.1,
            ..tile(0, 0, 64)
        }];
        let scores = score_tiles("s", &ConstScorer(1.0), &tiles, 0.25, 1).unwrap();
        assert!(scores.is_empty());
    }

    #[test]
    fn score_tiles_rejects_out_of_range_probability() {
        let tiles = vec![tile(0, 0, 64)];
        assert!(score_tiles("s", &ConstScorer(1.5), &tiles, 0.0, 1).is_err());
    }

    #[test]
    fn parallel_scoring_matches_sequential() {
        let tiles: Vec<Tile> = (0..97).map(|i| tile((i % 10) * 64, (i / 10) * 64, 64)).collect();
        struct CoordScorer;
        impl TileScorer for CoordScorer {
            fn score(&self, _s: &str, t: &Tile) -> Result<f64> {
                Ok(((t.x + t.y) % 100) as f64 / 100.0)
            }
        }
        let seq = score_tiles("s", &CoordScorer, &tiles, 0.0, 1).unwrap();
        let par = score_tiles("s", &CoordScorer, &tiles, 0.0, 4).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn heatmap_single_tile_uniform_mean() {
        let scores = vec![PatchScore {
            tile: tile(0, 0, 512),
            p_tumor: 0.7,
        }];
        let map = accumulate_heatmap(&scores, 512, 512, 256).unwrap();
        for cy in 0..2 {
            for cx in 0..2 {
                assert_eq!(map.vote_count(cx, cy), 1);
                assert_relative_eq!(map.mean(cx, cy), 0.7);
            }
        }
    }

    #[test]
    fn heatmap_interior_cells_get_four_votes() {
        let tiles = tile_grid(1024, 1024, 512, 256).unwrap();
        let scores: Vec<PatchScore> = tiles
            .into_iter()
            .map(|t| PatchScore {
                tile: t,
                p_tumor: 0.6,
            })
            .collect();
        let map = accumulate_heatmap(&scores, 1024, 1024, 256).unwrap();
        // Interior cells: stride 256 with side 512 yields 4 overlapping tiles.
        assert_eq!(map.vote_count(1, 1), 4);
        assert_eq!(map.vote_count(2, 2), 4);
        assert_relative_eq!(map.mean(1, 1), 0.6);
        // Corner cell is covered by a single tile.
        assert_eq!(map.vote_count(0, 0), 1);
    }

    #[test]
    fn heatmap_overlap_averages() {
        let scores = vec![
            PatchScore {
                tile: tile(0, 0, 512),
                p_tumor: 0.0,
            },
            PatchScore {
                tile: tile(256, 0, 512),
                p_tumor: 1.0,
            },
        ];
        let map = accumulate_heatmap(&scores, 768, 512, 256).unwrap();
        // Cells under both tiles average to 0.5.
        assert_eq!(map.vote_count(1, 0), 2);
        assert_relative_eq!(map.mean(1, 0), 0.5);
        assert_relative_eq!(map.mean(0, 0), 0.0);
        assert_relative_eq!(map.mean(2, 0), 1.0);
    }

    #[test]
    fn heatmap_is_order_independent() {
        let mut scores = vec![
            PatchScore {
                tile: tile(0, 0, 512),
                p_tumor: 0.25,
            },
            PatchScore {
                tile: tile(256, 0, 512),
                p_tumor: 0.75,
            },
            PatchScore {
                tile: tile(0, 256, 512),
                p_tumor: 0.125,
            },
        ];
        let a = accumulate_heatmap(&scores, 1024, 1024, 256).unwrap();
        scores.reverse();
        let b = accumulate_heatmap(&scores, 1024, 1024, 256).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn heatmap_rejects_out_of_bounds_tile() {
        let scores = vec![PatchScore {
            tile: tile(600, 0, 512),
            p_tumor: 1.0,
        }];
        assert!(matches!(
            accumulate_heatmap(&scores, 1024, 512, 256),
            Err(Error::TileOutOfBounds { .. })
        ));
    }

    #[test]
    fn threshold_boundaries() {
        let scores = vec![
            PatchScore {
                tile: tile(0, 0, 512),
                p_tumor: 0.0,
            },
            PatchScore {
                tile: tile(256, 0, 512),
                p_tumor: 1.0,
            },
        ];
        let map = accumulate_heatmap(&scores, 768, 512, 256).unwrap();
        // tau = 0: every scored cell is true.
        assert_eq!(threshold_heatmap(&map, 0.0).count_true(), 3 * 2);
        // tau = 1: only the two pure-positive cells.
        assert_eq!(threshold_heatmap(&map, 1.0).count_true(), 2);
        // tau = 0.5 on the 0.5-mean overlap cell: inclusive, so it is true.
        let mask = threshold_heatmap(&map, 0.5);
        assert!(mask.get(1, 0));
        assert!(!mask.get(0, 0));
    }

    #[test]
    fn label_rules() {
        let mut mask = BinaryMask::new_false(4, 4, 256, Point2::new(0.0, 0.0));
        assert_eq!(slide_label(&mask), SlideLabel::TumorNegative);
        mask.set(2, 1, true);
        assert_eq!(slide_label(&mask), SlideLabel::TumorPositive);
    }

    #[test]
    fn lowering_tau_never_shrinks_mask() {
        let tiles = tile_grid(1024, 1024, 512, 256).unwrap();
        let scores: Vec<PatchScore> = tiles
            .into_iter()
            .enumerate()
            .map(|(i, t)| PatchScore {
                tile: t,
                p_tumor: (i % 7) as f64 / 6.0,
            })
            .collect();
        let map = accumulate_heatmap(&scores, 1024, 1024, 256).unwrap();
        let mut prev = 0u64;
        for tau in [1.0, 0.75, 0.5, 0.25, 0.0] {
            let n = threshold_heatmap(&map, tau).count_true();
            assert!(n >= prev, "tau {tau} shrank the mask");
            prev = n;
        }
    }

    #[test]
    fn score_map_round_trip_and_missing_tile() {
        let scorer = ScoreMapScorer::new([((0, 0, 64), 0.25), ((64, 0, 64), 1.0)]);
        assert_eq!(scorer.score("s", &tile(0, 0, 64)).unwrap(), 0.25);
        assert!(scorer.score("s", &tile(128, 0, 64)).is_err());
    }
}
