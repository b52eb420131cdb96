//! `tumorbed synth`: generate a slide cohort with planted ground truth.

use tumorbed::formats::{self, Manifest, ManifestEntry, PolygonDoc};
use tumorbed::synth::{cohort_slide_specs, generate_slide, CohortSpec};

use crate::config::{write_resolved, RunConfig};
use crate::{CliError, SynthArgs};

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load_opt(args.config.as_deref())?;

    let mut from_file = true;
    let mut spec: CohortSpec = match args.spec.as_deref().or(cfg.inputs.spec.as_deref()) {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => match &cfg.synth {
            Some(s) => s.clone(),
            None if args.n_slides.is_some() => {
                from_file = false;
                CohortSpec::default()
            }
            None => {
                return Err(CliError::config(
                    "synth needs --spec FILE or --slides N (empty spec)",
                ))
            }
        },
    };
    if let Some(n) = args.n_slides {
        spec.n_slides = n;
    }
    if let Some(d) = args.dims {
        // Flag-only specs keep tumors proportional to the slide.
        if !from_file {
            let scale = d as f64 / spec.width as f64;
            spec.tumor_radius_px = (spec.tumor_radius_px.0 * scale, spec.tumor_radius_px.1 * scale);
            spec.margin_px *= scale;
        }
        spec.width = d;
        spec.height = d;
    }
    if let Some(mpp) = args.mpp {
        spec.mpp = mpp;
    }
    if let Some(f) = args.tumor_free {
        spec.tumor_free_fraction = f;
    }
    if let Some(d) = args.density {
        spec.tissue_density = d;
    }
    if let Some(s) = args.seed.or(cfg.seed) {
        spec.seed = s;
    }

    let out_dir = args
        .out
        .or(cfg.out_dir.clone())
        .ok_or_else(|| CliError::config("synth needs --out DIR"))?;
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::input(e.to_string()))?;

    let slide_specs = cohort_slide_specs(&spec).map_err(CliError::from)?;
    let mut entries = Vec::with_capacity(slide_specs.len());
    for slide_spec in &slide_specs {
        // One slide at a time keeps memory flat for full-size cohorts.
        let slide = generate_slide(slide_spec).map_err(CliError::from)?;
        formats::write_slide_bundle(&out_dir, &slide.slide_id, &slide.raster)?;
        let gt_name = slide.ground_truth.as_ref().map(|poly| {
            let name = format!("{}.gt.json", slide.slide_id);
            let doc = PolygonDoc::from_polygon(&slide.slide_id, spec.mpp, poly);
            formats::write_json(&out_dir.join(&name), &doc).map(|_| name)
        });
        let gt_name = match gt_name {
            Some(Ok(name)) => Some(name),
            Some(Err(e)) => return Err(e.into()),
            None => None,
        };
        entries.push(ManifestEntry {
            slide_id: slide.slide_id.clone(),
            label: slide.label,
            meta: format!("{}.meta.json", slide.slide_id),
            ground_truth: gt_name,
        });
    }
    let manifest = Manifest {
        seed: spec.seed,
        slides: entries,
    };
    formats::write_json(&out_dir.join("manifest.json"), &manifest)?;

    let resolved = RunConfig {
        command: Some("synth".into()),
        seed: Some(spec.seed),
        out_dir: Some(out_dir.clone()),
        synth: Some(spec),
        ..RunConfig::default()
    };
    write_resolved(&out_dir, &resolved)?;

    let negatives = manifest
        .slides
        .iter()
        .filter(|e| !e.label.is_positive())
        .count();
    println!(
        "wrote {} slides ({negatives} tumor-free) to {}",
        manifest.slides.len(),
        out_dir.display()
    );
    Ok(())
}
