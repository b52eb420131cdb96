//! `tumorbed infer`: run the prediction pipeline over slide bundles.

use std::path::{Path, PathBuf};
use std::time::Duration;

use tumorbed::formats::{self, PolygonDoc, PredictionDoc, RasterMeta};
use tumorbed::inference::{predict_tumor_bed, ScoreMapScorer};
use tumorbed::proto::{ProtoAddr, ProtoScorer, DEFAULT_TIMEOUT};
use tumorbed::synth::{OracleConfig, OracleScorer};

use crate::config::{write_resolved, InputsSection, OracleSection, PipelineSection, RunConfig};
use crate::{CliError, InferArgs};

/// Classifier specification as given on the command line or in config.
enum ClassifierSpec {
    Oracle(OracleConfig),
    Scores(PathBuf),
    Proto(ProtoAddr, Duration),
}

impl ClassifierSpec {
    fn parse(spec: &str, oracle: OracleConfig, timeout: Duration) -> Result<Self, CliError> {
        if spec == "oracle" {
            return Ok(ClassifierSpec::Oracle(oracle));
        }
        if let Some(path) = spec.strip_prefix("scores:") {
            return Ok(ClassifierSpec::Scores(PathBuf::from(path)));
        }
        if let Some(addr) = spec.strip_prefix("proto:") {
            let addr = ProtoAddr::parse(addr)
                .map_err(|e| CliError::config(format!("--classifier: {e}")))?;
            return Ok(ClassifierSpec::Proto(addr, timeout));
        }
        Err(CliError::config(format!(
            "unknown classifier `{spec}` (expected oracle, scores:PATH, or proto:ADDR)"
        )))
    }
}

pub fn run(args: InferArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load_opt(args.config.as_deref())?;
    let params = cfg.pipeline_params(&args.pipeline);
    params.validate().map_err(CliError::from)?;

    let slide_inputs: Vec<PathBuf> = if args.slides.is_empty() {
        cfg.inputs.slides.clone()
    } else {
        args.slides.clone()
    };
    if slide_inputs.is_empty() {
        return Err(CliError::config("infer needs --slides PATH..."));
    }
    let metas = collect_slide_metas(&slide_inputs)?;
    if metas.is_empty() {
        return Err(CliError::input(format!(
            "no slide bundles (*.meta.json) under {:?}",
            slide_inputs
        )));
    }

    let out_dir = args
        .out
        .clone()
        .or(cfg.out_dir.clone())
        .ok_or_else(|| CliError::config("infer needs --out DIR"))?;
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::input(e.to_string()))?;

    let classifier_str = args
        .classifier
        .clone()
        .or(cfg.classifier.clone())
        .unwrap_or_else(|| "oracle".to_string());
    let oracle_cfg = cfg.oracle_config(args.seed);
    let timeout = Duration::from_secs(
        args.timeout_secs
            .or(cfg.timeout_secs)
            .unwrap_or(DEFAULT_TIMEOUT.as_secs()),
    );
    let spec = ClassifierSpec::parse(&classifier_str, oracle_cfg, timeout)?;
    let mpp_override = args.mpp.or(cfg.mpp_override);

    // A protocol classifier keeps one connection for the whole run.
    let proto_scorer = match &spec {
        ClassifierSpec::Proto(addr, timeout) => Some(
            ProtoScorer::connect(addr, *timeout)
                .map_err(|e| CliError::Classifier(e.to_string()))?,
        ),
        _ => None,
    };

    for meta_path in &metas {
        let (meta, mut raster) = formats::read_slide_bundle(meta_path)?;
        if let Some(mpp) = mpp_override {
            raster.mpp = mpp;
        }
        if !(raster.mpp.is_finite() && raster.mpp > 0.0) {
            return Err(CliError::input(format!(
                "{}: missing or invalid mpp (use --mpp to override)",
                meta_path.display()
            )));
        }

        let prediction = match &spec {
            ClassifierSpec::Oracle(ocfg) => {
                let gt = read_ground_truth(meta_path, &meta.slide_id)?;
                let scorer = OracleScorer::new(gt, *ocfg).map_err(CliError::from)?;
                predict_tumor_bed(&meta.slide_id, &raster, &scorer, &params)
            }
            ClassifierSpec::Scores(path) => {
                let scorer = score_file_scorer(path, &meta.slide_id)?;
                predict_tumor_bed(&meta.slide_id, &raster, &scorer, &params)
            }
            ClassifierSpec::Proto(..) => {
                let scorer = proto_scorer.as_ref().unwrap();
                predict_tumor_bed(&meta.slide_id, &raster, scorer, &params)
            }
        }
        .map_err(CliError::from)?;

        let id = &meta.slide_id;
        formats::write_heatmap_image(&out_dir.join(format!("{id}.heatmap.png")), &prediction.heatmap)?;
        formats::write_json(
            &out_dir.join(format!("{id}.heatmap.json")),
            &RasterMeta {
                cell_size: prediction.heatmap.cell_size,
                tau: Some(params.tau),
            },
        )?;
        formats::write_mask_image(&out_dir.join(format!("{id}.mask.png")), &prediction.mask)?;
        formats::write_json(
            &out_dir.join(format!("{id}.mask.json")),
            &RasterMeta {
                cell_size: prediction.mask.cell_size,
                tau: None,
            },
        )?;
        if let Some(hull) = &prediction.hull {
            let doc = PolygonDoc::from_polygon(id, raster.mpp, hull);
            formats::write_json(&out_dir.join(format!("{id}.hull.json")), &doc)?;
        }
        let doc = PredictionDoc::from_prediction(&prediction, &params);
        formats::write_json(&out_dir.join(format!("{id}.pred.json")), &doc)?;
        log::info!("{id}: {}", prediction.label);
    }

    let resolved = RunConfig {
        command: Some("infer".into()),
        seed: args.seed.or(cfg.seed),
        out_dir: Some(out_dir.clone()),
        classifier: Some(classifier_str),
        mpp_override,
        timeout_secs: Some(timeout.as_secs()),
        pipeline: PipelineSection::from_params(&params),
        oracle: OracleSection {
            p_fp: Some(oracle_cfg.p_fp),
            p_fn: Some(oracle_cfg.p_fn),
            overlap_rule: Some(oracle_cfg.overlap_rule),
            seed: Some(oracle_cfg.seed),
        },
        inputs: InputsSection {
            slides: slide_inputs,
            ..InputsSection::default()
        },
        ..RunConfig::default()
    };
    write_resolved(&out_dir, &resolved)?;
    println!("wrote {} predictions to {}", metas.len(), out_dir.display());
    Ok(())
}

/// Expands directories into their `*.meta.json` files, sorted by path.
fn collect_slide_metas(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut metas = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found = Vec::new();
            for entry in std::fs::read_dir(input).map_err(|e| CliError::input(e.to_string()))? {
                let path = entry.map_err(|e| CliError::input(e.to_string()))?.path();
                if path.file_name().is_some_and(|n| {
                    n.to_string_lossy().ends_with(".meta.json")
                }) {
                    found.push(path);
                }
            }
            found.sort();
            metas.extend(found);
        } else if input.exists() {
            metas.push(input.clone());
        } else {
            return Err(CliError::input(format!("{}: not found", input.display())));
        }
    }
    Ok(metas)
}

/// The oracle reads `<id>.gt.json` next to the slide metadata; a missing file
/// means a tumor-free ground truth.
fn read_ground_truth(
    meta_path: &Path,
    slide_id: &str,
) -> Result<Option<tumorbed::geometry::Polygon>, CliError> {
    let gt_path = meta_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(format!("{slide_id}.gt.json"));
    if !gt_path.exists() {
        return Ok(None);
    }
    let doc: PolygonDoc = formats::read_json(&gt_path)?;
    Ok(Some(doc.to_polygon()))
}

/// `scores:PATH` accepts a single score file or a directory holding
/// `<slide-id>.scores.txt` per slide.
fn score_file_scorer(path: &Path, slide_id: &str) -> Result<ScoreMapScorer, CliError> {
    let file = if path.is_dir() {
        path.join(format!("{slide_id}.scores.txt"))
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&file)
        .map_err(|e| CliError::input(format!("{}: {e}", file.display())))?;
    let records = tumorbed::formats::parse_score_file(&text)?;
    Ok(ScoreMapScorer::new(records))
}
