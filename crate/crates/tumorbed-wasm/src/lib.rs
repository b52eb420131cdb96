//! Browser demo bindings. Three interactive operations, each taking and
//! returning JSON strings so the page needs no framework:
//!
//! - [`extent_from_points`]: convex hull, d1, d2, and d_prim of clicked
//!   points.
//! - [`pipeline_run`] / [`pipeline_slide_rgba`]: a seeded synthetic slide run
//!   through the full prediction pipeline, with heatmap, mask, hull, and
//!   metrics against the planted ground truth.
//! - [`mining_run`]: mini-batch k-means versus random negative sampling on
//!   2-d blobs.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use tumorbed::geometry::{tumor_bed_extent, Point2, Polygon, Segment, TumorBedExtent};
use tumorbed::imaging::{rasterize_polygon, GridGeometry};
use tumorbed::inference::{predict_tumor_bed, PipelineParams};
use tumorbed::metrics::dice;
use tumorbed::mining::{
    minibatch_kmeans, random_sample, sample_per_cluster, wcss, KMeansParams, PatchId,
};
use tumorbed::synth::{cohort_slide_specs, generate_slide, CohortSpec, OracleConfig, OracleScorer};

fn ring(poly: &Polygon) -> Vec<[f64; 2]> {
    poly.vertices().iter().map(|p| [p.x, p.y]).collect()
}

fn seg(segment: &Segment) -> [[f64; 2]; 2] {
    [[segment.a.x, segment.a.y], [segment.b.x, segment.b.y]]
}

#[derive(Serialize)]
struct ExtentOut {
    hull: Vec<[f64; 2]>,
    d1_segment: [[f64; 2]; 2],
    d2_segment: [[f64; 2]; 2],
    d1_px: f64,
    d2_px: f64,
    d1_mm: f64,
    d2_mm: f64,
    d_prim_mm: f64,
    theta: f64,
}

fn extent_out(points: &[Point2], mpp: f64) -> Result<ExtentOut, String> {
    let extent: TumorBedExtent = tumor_bed_extent(points, mpp).map_err(|e| e.to_string())?;
    let hull = tumorbed::geometry::convex_hull(points).map_err(|e| e.to_string())?;
    Ok(ExtentOut {
        hull: ring(&hull),
        d1_segment: seg(&extent.d1_segment),
        d2_segment: seg(&extent.d2_segment),
        d1_px: extent.d1_px,
        d2_px: extent.d2_px,
        d1_mm: extent.d1_mm,
        d2_mm: extent.d2_mm,
        d_prim_mm: extent.d_prim_mm,
        theta: extent.theta,
    })
}

fn err_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

/// points_json: `[[x, y], ...]` in pixels. Returns the hull, the d1/d2
/// segments, and the extent in pixels and millimeters.
#[wasm_bindgen]
pub fn extent_from_points(points_json: &str, mpp: f64) -> String {
    let raw: Vec<[f64; 2]> = match serde_json::from_str(points_json) {
        Ok(v) => v,
        Err(e) => return err_json(&format!("bad points: {e}")),
    };
    let points: Vec<Point2> = raw.iter().map(|&[x, y]| Point2::new(x, y)).collect();
    match extent_out(&points, mpp) {
        Ok(out) => serde_json::to_string(&out).unwrap(),
        Err(e) => err_json(&e),
    }
}

#[derive(Deserialize)]
#[serde(default)]
struct PipelineDemoParams {
    seed: u64,
    dims: u32,
    mpp: f64,
    tissue_density: f64,
    tumor: bool,
    side: u32,
    stride: u32,
    tau: f64,
    p_fp: f64,
    p_fn: f64,
    overlap_rule: f64,
}

impl Default for PipelineDemoParams {
    fn default() -> Self {
        PipelineDemoParams {
            seed: 1,
            dims: 768,
            mpp: 16.0,
            tissue_density: 0.4,
            tumor: true,
            side: 96,
            stride: 48,
            tau: 0.5,
            p_fp: 0.0,
            p_fn: 0.0,
            overlap_rule: 0.5,
        }
    }
}

impl PipelineDemoParams {
    fn cohort(&self) -> CohortSpec {
        let scale = self.dims as f64 / 4096.0;
        CohortSpec {
            seed: self.seed,
            n_slides: 1,
            width: self.dims,
            height: self.dims,
            mpp: self.mpp,
            tissue_density: self.tissue_density,
            tumor_free_fraction: if self.tumor { 0.0 } else { 1.0 },
            artifact_count: 2,
            tumor_radius_px: (1100.0 * scale, 1600.0 * scale),
            margin_px: 100.0 * scale,
            id_prefix: "demo".into(),
        }
    }

    fn pipeline(&self) -> PipelineParams {
        PipelineParams {
            side: self.side,
            stride: self.stride,
            tau: self.tau,
            workers: 1,
            ..PipelineParams::default()
        }
    }
}

#[derive(Serialize)]
struct HeatmapOut {
    width: u32,
    height: u32,
    cell_size: u32,
    /// Cell means scaled to 0..255, row-major.
    means: Vec<u8>,
    mask: Vec<u8>,
}

#[derive(Serialize)]
struct PipelineOut {
    label: String,
    ground_truth: Option<Vec<[f64; 2]>>,
    hull: Option<Vec<[f64; 2]>>,
    extent_pred: Option<ExtentOut>,
    extent_gt: Option<ExtentOut>,
    dice: Option<f64>,
    dprim_error_mm: Option<f64>,
    heatmap: HeatmapOut,
    n_scored_cells: u64,
}

fn run_pipeline(params: &PipelineDemoParams) -> Result<PipelineOut, String> {
    let spec = cohort_slide_specs(&params.cohort())
        .map_err(|e| e.to_string())?
        .remove(0);
    let slide = generate_slide(&spec).map_err(|e| e.to_string())?;
    let oracle = OracleScorer::new(
        slide.ground_truth.clone(),
        OracleConfig {
            p_fp: params.p_fp,
            p_fn: params.p_fn,
            overlap_rule: params.overlap_rule,
            seed: params.seed,
        },
    )
    .map_err(|e| e.to_string())?;
    let pipeline = params.pipeline();
    let pred = predict_tumor_bed(&slide.slide_id, &slide.raster, &oracle, &pipeline)
        .map_err(|e| e.to_string())?;

    let map = &pred.heatmap;
    let mut means = Vec::with_capacity((map.width * map.height) as usize);
    let mut mask_bits = Vec::with_capacity(means.capacity());
    for cy in 0..map.height {
        for cx in 0..map.width {
            means.push((map.mean(cx, cy) * 255.0).round().clamp(0.0, 255.0) as u8);
            mask_bits.push(u8::from(pred.mask.get(cx, cy)));
        }
    }

    let extent_gt = slide
        .ground_truth
        .as_ref()
        .and_then(|gt| extent_out(gt.vertices(), params.mpp).ok());
    let extent_pred = pred
        .hull
        .as_ref()
        .and_then(|h| extent_out(h.vertices(), params.mpp).ok());
    let (dice_value, dprim_error) = match (&pred.hull, &slide.ground_truth) {
        (Some(hull), Some(gt)) => {
            let geom = GridGeometry::covering(&[hull, gt], pipeline.effective_cell_size());
            let d = dice(
                &rasterize_polygon(hull, &geom),
                &rasterize_polygon(gt, &geom),
            )
            .ok();
            let err = match (&extent_pred, &extent_gt) {
                (Some(p), Some(g)) => Some((p.d_prim_mm - g.d_prim_mm).abs()),
                _ => None,
            };
            (d, err)
        }
        _ => (None, None),
    };

    Ok(PipelineOut {
        label: pred.label.to_string(),
        ground_truth: slide.ground_truth.as_ref().map(ring),
        hull: pred.hull.as_ref().map(ring),
        extent_pred,
        extent_gt,
        dice: dice_value,
        dprim_error_mm: dprim_error,
        heatmap: HeatmapOut {
            width: map.width,
            height: map.height,
            cell_size: map.cell_size,
            means,
            mask: mask_bits,
        },
        n_scored_cells: pred.mask.count_true(),
    })
}

/// Runs the synthetic pipeline for the given params JSON; see
/// `PipelineDemoParams` for the accepted fields (all optional).
#[wasm_bindgen]
pub fn pipeline_run(params_json: &str) -> String {
    let params: PipelineDemoParams = match serde_json::from_str(params_json) {
        Ok(p) => p,
        Err(e) => return err_json(&format!("bad params: {e}")),
    };
    match run_pipeline(&params) {
        Ok(out) => serde_json::to_string(&out).unwrap(),
        Err(e) => err_json(&e),
    }
}

/// RGBA pixels of the synthetic slide for the same params (deterministic per
/// seed, so it matches the `pipeline_run` overlays).
#[wasm_bindgen]
pub fn pipeline_slide_rgba(params_json: &str) -> Vec<u8> {
    let params: PipelineDemoParams = match serde_json::from_str(params_json) {
        Ok(p) => p,
        Err(_) => return Vec::new(),
    };
    let Ok(mut specs) = cohort_slide_specs(&params.cohort()) else {
        return Vec::new();
    };
    let Ok(slide) = generate_slide(&specs.remove(0)) else {
        return Vec::new();
    };
    let rgb = &slide.raster.pixels;
    let mut rgba = Vec::with_capacity(rgb.len() / 3 * 4);
    for px in rgb.chunks_exact(3) {
        rgba.extend_from_slice(&[px[0], px[1], px[2], 255]);
    }
    rgba
}

#[derive(Deserialize)]
#[serde(default)]
struct MiningDemoParams {
    seed: u64,
    per_blob: usize,
    sigma: f64,
    spacing: f64,
    k: usize,
    m: usize,
    random_total: usize,
    batch_size: usize,
    max_iters: usize,
}

impl Default for MiningDemoParams {
    fn default() -> Self {
        MiningDemoParams {
            seed: 1,
            per_blob: 120,
            sigma: 14.0,
            spacing: 200.0,
            k: 3,
            m: 3,
            random_total: 9,
            batch_size: 64,
            max_iters: 60,
        }
    }
}

#[derive(Serialize)]
struct MiningOut {
    points: Vec<[f64; 2]>,
    blob: Vec<u8>,
    centroids: Vec<[f64; 2]>,
    kmeans_selected: Vec<usize>,
    random_selected: Vec<usize>,
    kmeans_blobs_covered: usize,
    random_blobs_covered: usize,
    wcss: f64,
}

fn run_mining(params: &MiningDemoParams) -> Result<MiningOut, String> {
    // Three blobs around a triangle; deterministic per seed.
    let centers = [
        (0.0, 0.0),
        (params.spacing, 0.0),
        (params.spacing * 0.5, params.spacing * 0.866),
    ];
    let mut values: Vec<f32> = Vec::with_capacity(3 * params.per_blob * 2);
    let mut ids = Vec::with_capacity(3 * params.per_blob);
    let mut blob = Vec::with_capacity(3 * params.per_blob);
    // Reuse the synth module's coordinate hash as a tiny seeded generator.
    let mut unit = {
        let mut counter = 0u32;
        let seed = params.seed;
        move || {
            counter += 1;
            tumorbed::synth::tile_unit(seed, counter, 0)
        }
    };
    let normal = |u1: f64, u2: f64| (-2.0 * u1.max(1e-12).ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    for (b, &(cx, cy)) in centers.iter().enumerate() {
        for i in 0..params.per_blob {
            let x = cx + params.sigma * normal(unit(), unit());
            let y = cy + params.sigma * normal(unit(), unit());
            values.push(x as f32);
            values.push(y as f32);
            ids.push(PatchId {
                slide_id: format!("blob{b}"),
                x: i as u32,
                y: 0,
            });
            blob.push(b as u8);
        }
    }
    let features = tumorbed::mining::FeatureMatrix::new(3 * params.per_blob, 2, values, ids)
        .map_err(|e| e.to_string())?;

    let model = minibatch_kmeans(
        &features,
        &KMeansParams {
            k: params.k,
            batch_size: params.batch_size,
            max_iters: params.max_iters,
            seed: params.seed,
            tol_rel: 1e-4,
        },
    )
    .map_err(|e| e.to_string())?;
    let km_plan = sample_per_cluster(&model, &features, params.m).map_err(|e| e.to_string())?;
    let rand_plan =
        random_sample(features.ids(), params.random_total.min(features.n()), params.seed)
            .map_err(|e| e.to_string())?;

    let row_of = |id: &PatchId| features.ids().iter().position(|p| p == id).unwrap();
    let kmeans_selected: Vec<usize> = km_plan.selected.iter().map(&row_of).collect();
    let random_selected: Vec<usize> = rand_plan.selected.iter().map(&row_of).collect();
    let coverage = |rows: &[usize]| {
        let mut seen = [false; 3];
        for &r in rows {
            seen[blob[r] as usize] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };

    let kmeans_blobs_covered = coverage(&kmeans_selected);
    let random_blobs_covered = coverage(&random_selected);
    Ok(MiningOut {
        points: (0..features.n())
            .map(|i| {
                let r = features.row(i);
                [r[0] as f64, r[1] as f64]
            })
            .collect(),
        blob,
        centroids: (0..model.k)
            .map(|c| {
                let m = model.centroid(c);
                [m[0], m[1]]
            })
            .collect(),
        kmeans_blobs_covered,
        random_blobs_covered,
        kmeans_selected,
        random_selected,
        wcss: wcss(&features, &model.centroids, 2),
    })
}

/// Mini-batch k-means versus random sampling on three 2-d blobs.
#[wasm_bindgen]
pub fn mining_run(params_json: &str) -> String {
    let params: MiningDemoParams = match serde_json::from_str(params_json) {
        Ok(p) => p,
        Err(e) => return err_json(&format!("bad params: {e}")),
    };
    match run_mining(&params) {
        Ok(out) => serde_json::to_string(&out).unwrap(),
        Err(e) => err_json(&e),
    }
}
