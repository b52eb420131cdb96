//! Cohort evaluation: confusion matrix, Dice overlap, and d_prim error.
//!
//! Segmentation metrics (Dice, d_prim error) are computed only for slides
//! where ground truth is positive AND the prediction is positive; slides with
//! undetected tumor are excluded from the means and reported in `n_excluded`.
//! The Dice operands are the rasterized predicted hull and the rasterized
//! ground-truth outline on a shared cell grid.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{self, Polygon, TumorBedExtent};
use crate::imaging::{rasterize_polygon, BinaryMask, GridGeometry};
use crate::inference::SlideLabel;

/// Binary confusion matrix; rows are ground truth [negative, positive],
/// columns are prediction [negative, positive].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix2 {
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix2 {
    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn accuracy(&self) -> Option<f64> {
        match self.total() {
            0 => None,
            n => Some((self.tn + self.tp) as f64 / n as f64),
        }
    }

    pub fn add(&mut self, gt_positive: bool, pred_positive: bool) {
        match (gt_positive, pred_positive) {
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (true, true) => self.tp += 1,
        }
    }
}

/// Dice coefficient 2|A∩B| / (|A| + |B|) between two masks on the same grid.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let size_a = a.count_true();
    let size_b = b.count_true();
    if size_a + size_b == 0 {
        return Err(Error::DiceUndefined);
    }
    Ok(2.0 * inter as f64 / (size_a + size_b) as f64)
}

/// Absolute d_prim difference in millimeters.
pub fn dprim_error(pred: &TumorBedExtent, gt: &TumorBedExtent) -> f64 {
    (pred.d_prim_mm - gt.d_prim_mm).abs()
}

/// Per-slide evaluation outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlideEval {
    pub slide_id: String,
    pub gt_label: SlideLabel,
    pub pred_label: SlideLabel,
    /// Present iff the slide is included in segmentation metrics.
    pub dice: Option<f64>,
    pub dprim_error_mm: Option<f64>,
    pub included_in_segmentation: bool,
}

/// Cohort-level report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub matrix: ConfusionMatrix2,
    /// Unweighted mean over included slides; absent when none are included.
    pub mean_dice: Option<f64>,
    pub mean_dprim_error_mm: Option<f64>,
    /// Ground-truth-positive slides excluded from segmentation metrics.
    pub n_excluded: u64,
    pub n_included: u64,
    pub slides: Vec<SlideEval>,
}

/// Confusion matrix over per-slide labels.
pub fn confusion(evals: &[SlideEval]) -> ConfusionMatrix2 {
    let mut m = ConfusionMatrix2::default();
    for e in evals {
        m.add(e.gt_label.is_positive(), e.pred_label.is_positive());
    }
    m
}

/// Prediction side of a cohort evaluation.
#[derive(Debug, Clone)]
pub struct PredictionRecord {
    pub slide_id: String,
    pub label: SlideLabel,
    pub hull: Option<Polygon>,
    pub extent: Option<TumorBedExtent>,
}

/// Ground-truth side of a cohort evaluation. A present outline implies a
/// tumor-positive slide.
#[derive(Debug, Clone)]
pub struct GroundTruthRecord {
    pub slide_id: String,
    pub outline: Option<Polygon>,
    pub mpp: f64,
}

/// Evaluates matched prediction/ground-truth sets.
///
/// Slide-id sets must match exactly. Dice is computed between the rasterized
/// predicted hull and the rasterized ground-truth outline on a grid of
/// `cell_size` pixels aligned to the global cell lattice.
pub fn evaluate_cohort(
    predictions: &[PredictionRecord],
    ground_truths: &[GroundTruthRecord],
    cell_size: u32,
) -> Result<EvalReport> {
    if cell_size == 0 {
        return Err(Error::invalid("cell size must be positive"));
    }
    let preds: BTreeMap<&str, &PredictionRecord> = predictions
        .iter()
        .map(|p| (p.slide_id.as_str(), p))
        .collect();
    let gts: BTreeMap<&str, &GroundTruthRecord> = ground_truths
        .iter()
        .map(|g| (g.slide_id.as_str(), g))
        .collect();
    if preds.len() != predictions.len() || gts.len() != ground_truths.len() {
        return Err(Error::SlideIdMismatch("duplicate slide ids".into()));
    }
    let missing: Vec<&str> = gts.keys().filter(|k| !preds.contains_key(*k)).copied().collect();
    let extra: Vec<&str> = preds.keys().filter(|k| !gts.contains_key(*k)).copied().collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::SlideIdMismatch(format!(
            "missing predictions for [{}], predictions without ground truth [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }

    let mut slides = Vec::with_capacity(gts.len());
    let mut dice_sum = 0.0;
    let mut err_sum = 0.0;
    let mut n_included = 0u64;
    let mut n_excluded = 0u64;

    for (id, gt) in &gts {
        let pred = preds[id];
        let gt_positive = gt.outline.is_some();
        let gt_label = if gt_positive {
            SlideLabel::TumorPositive
        } else {
            SlideLabel::TumorNegative
        };

        let mut eval = SlideEval {
            slide_id: id.to_string(),
            gt_label,
            pred_label: pred.label,
            dice: None,
            dprim_error_mm: None,
            included_in_segmentation: false,
        };

        if gt_positive {
            let included = pred.label.is_positive()
                && segmentation_metrics(pred, gt, cell_size, &mut eval)?;
            if included {
                eval.included_in_segmentation = true;
                dice_sum += eval.dice.unwrap();
                err_sum += eval.dprim_error_mm.unwrap();
                n_included += 1;
            } else {
                n_excluded += 1;
            }
        }
        slides.push(eval);
    }

    let matrix = confusion(&slides);
    Ok(EvalReport {
        matrix,
        mean_dice: (n_included > 0).then(|| dice_sum / n_included as f64),
        mean_dprim_error_mm: (n_included > 0).then(|| err_sum / n_included as f64),
        n_excluded,
        n_included,
        slides,
    })
}

/// Fills Dice and d_prim error when both sides have a measurable bed.
/// Returns false when the predicted hull or extent is too degenerate.
fn segmentation_metrics(
    pred: &PredictionRecord,
    gt: &GroundTruthRecord,
    cell_size: u32,
    eval: &mut SlideEval,
) -> Result<bool> {
    let (Some(hull), Some(pred_extent)) = (&pred.hull, &pred.extent) else {
        return Ok(false);
    };
    let outline = gt.outline.as_ref().unwrap();
    // The bed is the hull of all cancer, so the ground-truth outline is
    // hulled too; a degenerate outline has no measurable extent.
    let gt_extent = match geometry::tumor_bed_extent(outline.vertices(), gt.mpp) {
        Ok(e) => e,
        Err(Error::ExtentUndefined) | Err(Error::DegenerateHull) => return Ok(false),
        Err(e) => return Err(e),
    };

    let geom = GridGeometry::covering(&[hull, outline], cell_size);
    let pred_mask = rasterize_polygon(hull, &geom);
    let gt_mask = rasterize_polygon(outline, &geom);
    let d = match dice(&pred_mask, &gt_mask) {
        Ok(d) => d,
        // Both rasters empty can only happen for sub-cell shapes.
        Err(Error::DiceUndefined) => return Ok(false),
        Err(e) => return Err(e),
    };
    eval.dice = Some(d);
    eval.dprim_error_mm = Some(dprim_error(pred_extent, &gt_extent));
    Ok(true)
}
