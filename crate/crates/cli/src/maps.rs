use std::path::PathBuf;

use boxforge_core::geometry::{compute_maps_fast, compute_maps_reference, MapOptions};
use boxforge_core::BoundingBox;
use serde::{Deserialize, Serialize};

use crate::archive::write_json;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct MapsDumpArgs {
    /// JSON array of boxes.
    pub boxes: PathBuf,
    pub height: usize,
    pub width: usize,
    /// Output prefix; `.distance.f32`, `.class.u8` and `.json` are appended.
    pub out: PathBuf,
    pub class_everywhere: bool,
    pub reference: bool,
}

/// Header written next to the raw grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapsHeader {
    pub height: usize,
    pub width: usize,
    pub d_max: f64,
}

fn with_suffix(prefix: &std::path::Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes the signed distance map (row-major little-endian f32) and the
/// class map (one byte per pixel) for a box file.
pub fn dump_maps(args: &MapsDumpArgs) -> Result<MapsHeader, CliError> {
    let text = std::fs::read_to_string(&args.boxes).map_err(|e| CliError::Validation(format!("{}: {e}", args.boxes.display())))?;
    let boxes: Vec<BoundingBox> =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: not a JSON box array: {e}", args.boxes.display())))?;
    let opts = MapOptions {
        class_everywhere: args.class_everywhere,
    };
    let compute = if args.reference { compute_maps_reference } else { compute_maps_fast };
    let maps = compute(&boxes, args.height, args.width, opts).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let dist: Vec<u8> = maps.distance.iter().flat_map(|&d| (d as f32).to_le_bytes()).collect();
    let dist_path = with_suffix(&args.out, ".distance.f32");
    std::fs::write(&dist_path, dist).map_err(|e| CliError::io(&dist_path, e))?;
    let class: Vec<u8> = maps.class_map.iter().copied().collect();
    let class_path = with_suffix(&args.out, ".class.u8");
    std::fs::write(&class_path, class).map_err(|e| CliError::io(&class_path, e))?;
    let header = MapsHeader {
        height: args.height,
        width: args.width,
        d_max: maps.d_max,
    };
    write_json(&with_suffix(&args.out, ".json"), &header)?;
    Ok(header)
}
