//! Command implementations. Every command prints one `SUMMARY {json}` line
//! on success; artifact locations are fixed functions of the config so
//! downstream commands find upstream outputs without extra flags.

pub mod grid;
pub mod predict;
pub mod prepare;
pub mod synth;
pub mod train;

use std::io::ErrorKind;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use relict_core::evaluation::{final_checkpoint_path, CombinationId, PredictOptions};
use relict_core::models::{load_checkpoint, Checkpoint};
use relict_core::raster::{
    load_mask, load_raster, rasterize_mask, read_geojson, AreaSplit, MaskRaster, MultibandRaster,
};

use crate::config::{PipelineConfig, SceneConfig};
use crate::{CliError, CliResult};

pub fn print_summary(value: serde_json::Value) {
    println!("SUMMARY {value}");
}

/// Scene inputs are produced by `synth` when the config carries a
/// [synthetic] block; without one, a missing input file is a config error
/// (the config references a path that does not resolve).
fn scene_input<T>(
    config: &PipelineConfig,
    result: relict_core::error::Result<T>,
    path: &Path,
) -> CliResult<T> {
    match result {
        Ok(v) => Ok(v),
        Err(relict_core::Error::Io { source, .. }) if source.kind() == ErrorKind::NotFound => {
            if config.synthetic.is_some() {
                Err(CliError::Missing {
                    what: format!("scene file {}", path.display()),
                    run: "synth".into(),
                })
            } else {
                Err(CliError::Config(format!(
                    "scene file {} does not exist",
                    path.display()
                )))
            }
        }
        Err(e) => Err(CliError::Runtime(e)),
    }
}

pub fn load_scene_raster(
    config: &PipelineConfig,
    scene: &SceneConfig,
) -> CliResult<MultibandRaster> {
    scene_input(config, load_raster(&scene.raster, None), &scene.raster)
}

/// Truth mask for a scene: loaded directly, or rasterized from polygons
/// against the full scene raster.
pub fn load_scene_truth(
    config: &PipelineConfig,
    scene: &SceneConfig,
    template: &MultibandRaster,
) -> CliResult<MaskRaster> {
    match (&scene.mask, &scene.polygons) {
        (Some(path), _) => scene_input(config, load_mask(path), path),
        (None, Some(path)) => {
            let polygons = scene_input(config, read_geojson(path), path)?;
            Ok(rasterize_mask(&polygons, template))
        }
        (None, None) => unreachable!("config validation requires a truth source"),
    }
}

pub fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(relict_core::Error::io(parent, e)))?;
    }
    Ok(())
}

pub fn save_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(relict_core::Error::Serde(e.to_string())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Runtime(relict_core::Error::io(path, e)))
}

/// Read a JSON artifact; a missing file points at the producing command.
pub fn load_json<T: DeserializeOwned>(path: &Path, what: &str, run: &str) -> CliResult<T> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == ErrorKind::NotFound => {
            return Err(CliError::Missing {
                what: format!("{what} {}", path.display()),
                run: run.into(),
            })
        }
        Err(e) => return Err(CliError::Runtime(relict_core::Error::io(path, e))),
    };
    serde_json::from_str(&text).map_err(|e| {
        CliError::Runtime(relict_core::Error::Serde(format!("{}: {e}", path.display())))
    })
}

pub fn load_split(config: &PipelineConfig, scene: &str) -> CliResult<AreaSplit> {
    load_json(
        &config.split_path(scene),
        "train/test split",
        "prepare-labeled",
    )
}

pub fn predict_options(config: &PipelineConfig) -> PredictOptions {
    PredictOptions {
        threshold: config.evaluation.threshold,
        tile_size: config.dataset.tile_size,
        pad_mode: config.dataset.pad_mode,
        batch_size: config.evaluation.batch_size,
    }
}

/// Final checkpoint path inside a training directory. Both a missing
/// directory and a directory without epoch files mean `run` has not run.
pub fn final_checkpoint_in(dir: &Path, what: &str, run: &str) -> CliResult<std::path::PathBuf> {
    final_checkpoint_path(dir).map_err(|e| match &e {
        relict_core::Error::Io { source, .. } if source.kind() == ErrorKind::NotFound => {
            CliError::Missing {
                what: format!("{what} under {}", dir.display()),
                run: run.into(),
            }
        }
        relict_core::Error::Evaluation(_) => CliError::Missing {
            what: format!("{what} under {}", dir.display()),
            run: run.into(),
        },
        _ => CliError::Runtime(e),
    })
}

/// Final checkpoint of a trained combination.
pub fn load_final_checkpoint(
    config: &PipelineConfig,
    combo: &CombinationId,
) -> CliResult<Checkpoint> {
    let dir = combo.dir(&config.models_root());
    let path = final_checkpoint_in(&dir, &format!("checkpoint for {combo}"), "train")?;
    load_checkpoint(&path).map_err(CliError::Runtime)
}
