//! `tumorbed extent`: d1/d2/d_prim of a polygon document.

use tumorbed::formats::{self, PolygonDoc};
use tumorbed::geometry::tumor_bed_extent;

use crate::config::{write_resolved, InputsSection, RunConfig};
use crate::{CliError, ExtentArgs};

pub fn run(args: ExtentArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load_opt(args.config.as_deref())?;
    let polygon_path = args
        .polygon
        .clone()
        .or(cfg.inputs.polygon.clone())
        .ok_or_else(|| CliError::config("extent needs --polygon FILE"))?;
    let doc: PolygonDoc = formats::read_json(&polygon_path)
        .map_err(|e| CliError::input(format!("{}: {e}", polygon_path.display())))?;
    let mpp = args.mpp.or(cfg.mpp_override).unwrap_or(doc.mpp);

    let poly = doc.to_polygon();
    let extent = tumor_bed_extent(poly.vertices(), mpp).map_err(CliError::from)?;
    let json = serde_json::to_string_pretty(&extent)
        .map_err(|e| CliError::input(e.to_string()))?;
    println!("{json}");

    if let Some(out_dir) = args.out.clone().or(cfg.out_dir.clone()) {
        std::fs::create_dir_all(&out_dir).map_err(|e| CliError::input(e.to_string()))?;
        formats::write_json(&out_dir.join(format!("{}.extent.json", doc.slide_id)), &extent)?;
        let resolved = RunConfig {
            command: Some("extent".into()),
            out_dir: Some(out_dir.clone()),
            mpp_override: Some(mpp),
            inputs: InputsSection {
                polygon: Some(polygon_path),
                ..InputsSection::default()
            },
            ..RunConfig::default()
        };
        write_resolved(&out_dir, &resolved)?;
    }
    Ok(())
}
