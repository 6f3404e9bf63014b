//! Scene synthesis: writes one deterministic synthetic scene per configured
//! `[[scenes]]` entry, at the raster and mask paths the other commands read.

use std::path::{Path, PathBuf};

use serde_json::json;

use relict_core::raster::{save_mask, save_raster};
use relict_core::synthetic::generate_scene;

use crate::commands::{ensure_parent, print_summary};
use crate::config::PipelineConfig;
use crate::{CliError, CliResult};

/// Confounder mask sibling of the scar mask: `<stem>_confounders.<ext>`.
fn confounder_path(mask_path: &Path) -> PathBuf {
    let stem = mask_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mask");
    let ext = mask_path
        .extension()
        .and_then(|s| s.to_str())
        .unwrap_or("rgrid");
    mask_path.with_file_name(format!("{stem}_confounders.{ext}"))
}

pub fn run(config: &PipelineConfig) -> CliResult<()> {
    let Some(base) = &config.synthetic else {
        return Err(CliError::Config(
            "synth needs a [synthetic] block in the config".into(),
        ));
    };
    let mut scenes = Vec::new();
    for (index, scene) in config.scenes.iter().enumerate() {
        let mut spec = base.clone();
        spec.seed = base.seed.wrapping_add(index as u64);
        let (raster, scars, confounders) = generate_scene(&spec)?;

        let mask_path = scene.mask.as_ref().expect("validated: synthetic scenes carry mask paths");
        ensure_parent(&scene.raster)?;
        ensure_parent(mask_path)?;
        save_raster(&raster, &scene.raster)?;
        save_mask(&scars, mask_path)?;
        save_mask(&confounders, &confounder_path(mask_path))?;

        scenes.push(json!({
            "name": scene.name,
            "seed": spec.seed,
            "size": [spec.height, spec.width],
            "scar_pixels": scars.values.iter().filter(|&&v| v == 1).count(),
            "raster": scene.raster.display().to_string(),
        }));
    }
    print_summary(json!({
        "command": "synth",
        "config_hash": config.config_hash(),
        "scenes": scenes,
    }));
    Ok(())
}
