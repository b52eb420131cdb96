//! `tumorbed evaluate`: cohort metrics from prediction and truth directories.

use std::path::Path;

use tumorbed::formats::{self, Manifest, PolygonDoc, PredictionDoc, render_report_table};
use tumorbed::metrics::{evaluate_cohort, GroundTruthRecord, PredictionRecord};

use crate::config::{write_resolved, InputsSection, PipelineSection, RunConfig};
use crate::{CliError, EvaluateArgs};

pub fn run(args: EvaluateArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load_opt(args.config.as_deref())?;
    let pred_dir = args
        .predictions
        .clone()
        .or(cfg.inputs.predictions.clone())
        .ok_or_else(|| CliError::config("evaluate needs --pred DIR"))?;
    let truth_dir = args
        .truth
        .clone()
        .or(cfg.inputs.truth.clone())
        .ok_or_else(|| CliError::config("evaluate needs --truth DIR"))?;
    let cell_size = args
        .cell_size
        .or(cfg.pipeline.cell_size)
        .or(cfg.pipeline.stride)
        .unwrap_or(256);
    let out_dir = args
        .out
        .clone()
        .or(cfg.out_dir.clone())
        .ok_or_else(|| CliError::config("evaluate needs --out DIR"))?;
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::input(e.to_string()))?;

    let predictions = read_predictions(&pred_dir)?;
    let truths = read_ground_truths(&truth_dir)?;
    if truths.is_empty() {
        return Err(CliError::input(format!(
            "empty cohort: no slides in {}",
            truth_dir.display()
        )));
    }

    let report = evaluate_cohort(&predictions, &truths, cell_size).map_err(CliError::from)?;
    formats::write_json(&out_dir.join("report.json"), &report)?;
    let table = render_report_table(&report);
    formats::atomic_write(&out_dir.join("report.txt"), table.as_bytes())?;
    print!("{table}");

    let resolved = RunConfig {
        command: Some("evaluate".into()),
        out_dir: Some(out_dir.clone()),
        pipeline: PipelineSection {
            cell_size: Some(cell_size),
            ..PipelineSection::default()
        },
        inputs: InputsSection {
            predictions: Some(pred_dir),
            truth: Some(truth_dir),
            ..InputsSection::default()
        },
        ..RunConfig::default()
    };
    write_resolved(&out_dir, &resolved)?;
    Ok(())
}

fn read_predictions(dir: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir)
        .map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?
    {
        let path = entry.map_err(|e| CliError::input(e.to_string()))?.path();
        if path
            .file_name()
            .is_some_and(|n| n.to_string_lossy().ends_with(".pred.json"))
        {
            paths.push(path);
        }
    }
    paths.sort();
    let mut records = Vec::with_capacity(paths.len());
    for path in paths {
        let doc: PredictionDoc = formats::read_json(&path)?;
        records.push(PredictionRecord {
            slide_id: doc.slide_id.clone(),
            label: doc.label,
            hull: doc.hull_polygon(),
            extent: doc.extent,
        });
    }
    Ok(records)
}

fn read_ground_truths(dir: &Path) -> Result<Vec<GroundTruthRecord>, CliError> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = formats::read_json(&manifest_path)
        .map_err(|e| CliError::input(format!("{}: {e}", manifest_path.display())))?;
    let mut records = Vec::with_capacity(manifest.slides.len());
    for entry in &manifest.slides {
        let (outline, mpp) = match &entry.ground_truth {
            Some(name) => {
                let doc: PolygonDoc = formats::read_json(&dir.join(name))?;
                (Some(doc.to_polygon()), doc.mpp)
            }
            None => {
                // Tumor-free slide; pull mpp from the slide metadata.
                let meta: formats::SlideMeta = formats::read_json(&dir.join(&entry.meta))?;
                (None, meta.mpp)
            }
        };
        records.push(GroundTruthRecord {
            slide_id: entry.slide_id.clone(),
            outline,
            mpp,
        });
    }
    Ok(records)
}
