//! Prediction and scoring over a scene's held-out test area. Both commands
//! work from the combination's final checkpoint; `evaluate` does not require
//! `predict` to have run.

use ndarray::Axis;
use serde_json::json;

use relict_core::evaluation::{
    evaluate_prediction, predict_scene, render_outcome_map, CombinationId,
};
use relict_core::raster::{save_mask, save_raster, MaskRaster, MultibandRaster};

use crate::commands::{
    ensure_parent, load_final_checkpoint, load_scene_raster, load_scene_truth, load_split,
    predict_options, print_summary, save_json,
};
use crate::config::PipelineConfig;
use crate::{CliError, CliResult};

pub fn predict(config: &PipelineConfig, combo: &CombinationId, scene_name: &str) -> CliResult<()> {
    let scene = config.scene(scene_name)?;
    let checkpoint = load_final_checkpoint(config, combo)?;
    let raster = load_scene_raster(config, scene)?;
    let split = load_split(config, scene_name)?;
    let test = split.test_region.crop_raster(&raster)?;
    let prediction = predict_scene(checkpoint, &test, &predict_options(config))?;

    let dir = combo.dir(&config.predictions_root());
    let prob_path = dir.join(format!("{scene_name}_prob.rgrid"));
    ensure_parent(&prob_path)?;
    let probability = MultibandRaster::new(
        prediction.probabilities.clone().insert_axis(Axis(0)),
        prediction.valid.mapv(|v| !v),
        vec!["probability".into()],
        test.transform,
        test.crs.clone(),
    )?;
    save_raster(&probability, &prob_path)?;
    save_mask(
        &MaskRaster::new(prediction.binary.clone(), test.transform, test.crs.clone())?,
        &dir.join(format!("{scene_name}_pred.rgrid")),
    )?;

    let positive_pixels = prediction.binary.iter().filter(|&&v| v == 1).count();
    let valid_pixels = prediction.valid.iter().filter(|&&v| v).count();
    save_json(
        &dir.join(format!("{scene_name}_meta.json")),
        &json!({
            "threshold": prediction.threshold,
            "provenance": prediction.provenance,
            "positive_pixels": positive_pixels,
            "valid_pixels": valid_pixels,
        }),
    )?;
    print_summary(json!({
        "command": "predict",
        "config_hash": config.config_hash(),
        "combination": combo.to_string(),
        "scene": scene_name,
        "positive_pixels": positive_pixels,
        "valid_pixels": valid_pixels,
        "dir": dir.display().to_string(),
    }));
    Ok(())
}

pub fn evaluate(
    config: &PipelineConfig,
    combo: &CombinationId,
    scene_name: &str,
    force: bool,
) -> CliResult<()> {
    let scene = config.scene(scene_name)?;
    let checkpoint = load_final_checkpoint(config, combo)?;
    let hash = config.config_hash();
    let stamped = checkpoint.provenance.config_hash.as_deref();
    if stamped != Some(hash.as_str()) && !force {
        return Err(CliError::Config(format!(
            "checkpoint config hash {} does not match this config ({hash}); pass --force to evaluate anyway",
            stamped.unwrap_or("<unstamped>")
        )));
    }

    let raster = load_scene_raster(config, scene)?;
    let truth = load_scene_truth(config, scene, &raster)?;
    let split = load_split(config, scene_name)?;
    let test_raster = split.test_region.crop_raster(&raster)?;
    let test_truth = split.test_region.crop_mask(&truth)?;
    let prediction = predict_scene(checkpoint, &test_raster, &predict_options(config))?;
    let report = evaluate_prediction(&prediction, &test_truth)?;

    let dir = combo.dir(&config.evaluation_root());
    let outcomes_path = dir.join(format!("{scene_name}_outcomes.rgrid"));
    ensure_parent(&outcomes_path)?;
    render_outcome_map(
        &report,
        test_raster.transform,
        test_raster.crs.as_deref().unwrap_or(""),
        &outcomes_path,
    )?;
    save_json(&dir.join(format!("{scene_name}_report.json")), &report)?;

    print_summary(json!({
        "command": "evaluate",
        "config_hash": hash,
        "combination": combo.to_string(),
        "scene": scene_name,
        "precision": report.precision,
        "recall": report.recall,
        "precision_defined": report.precision_defined,
        "recall_defined": report.recall_defined,
        "true_positives": report.true_positives,
        "false_positives": report.false_positives,
        "false_negatives": report.false_negatives,
        "true_negatives": report.true_negatives,
        "dir": dir.display().to_string(),
    }));
    Ok(())
}
