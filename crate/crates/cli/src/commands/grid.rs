//! The experiment grid: every requested framework/architecture/k/variant
//! combination is trained through the core runner and scored on the scenes'
//! test areas, producing one report plus a framework comparison.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde_json::json;

use relict_core::datasets::{
    load_cluster_dataset, load_labeled_dataset, ClusterDataset, LabeledDataset,
};
use relict_core::evaluation::{
    confusion, final_checkpoint_path, predict_scene_with, run_grid, CombinationId, EvalReport,
    GridReport, PredictOptions,
};
use relict_core::models::{load_checkpoint, Framework};
use relict_core::raster::{MaskRaster, MultibandRaster};
use relict_core::training::{run_framework, DatasetVariant, FrameworkRun};

use crate::commands::{
    load_scene_raster, load_scene_truth, load_split, predict_options, print_summary, save_json,
};
use crate::config::PipelineConfig;
use crate::{missing_if_not_found, CliError, CliResult};

fn requested_combinations(
    config: &PipelineConfig,
    only: Option<Framework>,
) -> CliResult<Vec<CombinationId>> {
    let frameworks: Vec<Framework> = config
        .grid
        .frameworks
        .iter()
        .copied()
        .filter(|f| only.map_or(true, |want| want == *f))
        .collect();
    if frameworks.is_empty() {
        return Err(CliError::Config(
            "the framework filter excludes every configured framework".into(),
        ));
    }
    let mut combos = Vec::new();
    for &framework in &frameworks {
        for &architecture in &config.grid.architectures {
            for &variant in &config.grid.variants {
                match framework {
                    Framework::Standard => combos.push(CombinationId {
                        framework,
                        architecture,
                        k: None,
                        variant,
                    }),
                    Framework::Proposed => {
                        for &k in &config.dataset.k {
                            combos.push(CombinationId {
                                framework,
                                architecture,
                                k: Some(k as u32),
                                variant,
                            });
                        }
                    }
                }
            }
        }
    }
    combos.sort();
    combos.dedup();
    Ok(combos)
}

/// Pooled confusion for one combination over several scenes: per-scene
/// predictions are flattened into one row so the core confusion arithmetic
/// produces the cross-scene counts.
fn pooled_outcome(
    combo: &CombinationId,
    root: &Path,
    scenes: &[(MultibandRaster, MaskRaster)],
    opts: &PredictOptions,
) -> relict_core::error::Result<EvalReport> {
    let path = final_checkpoint_path(&combo.dir(root))?;
    let checkpoint = load_checkpoint(&path)?;
    let provenance = checkpoint.provenance.clone();
    let mut network = checkpoint.into_network()?;
    let (mut preds, mut truths, mut valids) = (Vec::new(), Vec::new(), Vec::new());
    for (raster, truth) in scenes {
        let prediction = predict_scene_with(&mut network, provenance.clone(), raster, opts)?;
        preds.extend(prediction.binary.iter().copied());
        truths.extend(truth.values.iter().copied());
        valids.extend(prediction.valid.iter().copied());
    }
    let n = preds.len();
    let pred = Array2::from_shape_vec((1, n), preds).expect("row shape");
    let truth = Array2::from_shape_vec((1, n), truths).expect("row shape");
    let valid = Array2::from_shape_vec((1, n), valids).expect("row shape");
    confusion(&pred, &truth, &valid, provenance)
}

fn score(
    config: &PipelineConfig,
    combos: &[CombinationId],
    models_root: &Path,
) -> CliResult<GridReport> {
    let mut scenes = Vec::new();
    for scene in &config.scenes {
        let raster = load_scene_raster(config, scene)?;
        let truth = load_scene_truth(config, scene, &raster)?;
        let split = load_split(config, &scene.name)?;
        let test_raster = split.test_region.crop_raster(&raster)?;
        let test_truth = split.test_region.crop_mask(&truth)?;
        scenes.push((test_raster, test_truth));
    }
    let opts = predict_options(config);
    if let [(raster, truth)] = scenes.as_slice() {
        return run_grid(models_root, combos, raster, truth, &opts).map_err(CliError::Runtime);
    }
    let mut results = Vec::with_capacity(combos.len());
    for &combo in combos {
        let outcome = pooled_outcome(&combo, models_root, &scenes, &opts);
        results.push((combo, outcome.map_err(|e| e.to_string())));
    }
    Ok(GridReport::from_results(results))
}

/// Per-framework aggregate over the successful rows; means and maxima skip
/// rows whose ratio is undefined.
fn comparison(report: &GridReport) -> serde_json::Value {
    let mean = |v: &[f64]| {
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let max = |v: &[f64]| v.iter().copied().fold(None, |m: Option<f64>, x| {
        Some(m.map_or(x, |m| m.max(x)))
    });
    let mut sides = Vec::new();
    for framework in [Framework::Standard, Framework::Proposed] {
        let rows: Vec<_> = report
            .rows
            .iter()
            .filter(|r| r.combination.framework == framework && r.failed.is_none())
            .collect();
        let precisions: Vec<f64> = rows
            .iter()
            .filter(|r| r.precision_defined)
            .map(|r| r.precision)
            .collect();
        let recalls: Vec<f64> = rows
            .iter()
            .filter(|r| r.recall_defined)
            .map(|r| r.recall)
            .collect();
        sides.push(json!({
            "framework": framework.as_str(),
            "rows": rows.len(),
            "mean_precision": mean(&precisions),
            "max_precision": max(&precisions),
            "mean_recall": mean(&recalls),
            "max_recall": max(&recalls),
        }));
    }
    json!({ "frameworks": sides })
}

pub fn run(config: &PipelineConfig, only: Option<Framework>) -> CliResult<()> {
    let combos = requested_combinations(config, only)?;

    let mut variants: BTreeMap<DatasetVariant, LabeledDataset> = BTreeMap::new();
    for combo in &combos {
        if !variants.contains_key(&combo.variant) {
            let dataset = missing_if_not_found(
                load_labeled_dataset(&config.variant_dir(combo.variant)),
                &format!("{} dataset", combo.variant),
                "augment",
            )?;
            variants.insert(combo.variant, dataset);
        }
    }
    let mut clusters: BTreeMap<u32, ClusterDataset> = BTreeMap::new();
    for combo in &combos {
        if let Some(k) = combo.k {
            if !clusters.contains_key(&k) {
                let dataset = missing_if_not_found(
                    load_cluster_dataset(&config.cluster_dataset_dir(k as usize)),
                    &format!("cluster dataset for k={k}"),
                    "prepare-cluster",
                )?;
                clusters.insert(k, dataset);
            }
        }
    }
    let bands = variants
        .values()
        .find_map(|d| d.tiles.first())
        .map(|t| t.pixels.dim().0)
        .ok_or_else(|| {
            CliError::Runtime(relict_core::Error::Dataset(
                "the labeled datasets are empty".into(),
            ))
        })?;
    let encoder = config.model.encoder(bands);
    let hash = config.config_hash();
    let models_root = config.models_root();

    // Training phase. Combinations are independent: each writes only its own
    // directory, so the pool size changes wall time, never results.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.grid.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))?;
    let failures: Vec<(CombinationId, String)> = pool.install(|| {
        combos
            .par_iter()
            .filter_map(|combo| {
                let run = FrameworkRun {
                    framework: combo.framework,
                    architecture: combo.architecture,
                    k: combo.k,
                    variant: combo.variant,
                    encoder: encoder.clone(),
                    cluster_dataset: combo.k.and_then(|k| clusters.get(&k)),
                    labeled_dataset: &variants[&combo.variant],
                    pretrain_config: config.pretrain_config_for(combo.k.unwrap_or(0) as usize),
                    train_config: config.finetune.clone(),
                    output_root: Some(models_root.as_path()),
                    config_hash: Some(hash.clone()),
                };
                run_framework(run).err().map(|e| (*combo, e.to_string()))
            })
            .collect()
    });
    for (combo, error) in &failures {
        eprintln!("grid: training {combo} failed: {error}");
    }

    let report = score(config, &combos, &models_root)?;
    let grid_dir = config.grid_dir();
    std::fs::create_dir_all(&grid_dir)
        .map_err(|e| CliError::Runtime(relict_core::Error::io(&grid_dir, e)))?;
    let csv_path = grid_dir.join("report.csv");
    std::fs::write(&csv_path, report.to_csv())
        .map_err(|e| CliError::Runtime(relict_core::Error::io(&csv_path, e)))?;
    save_json(&grid_dir.join("report.json"), &report)?;

    let comparison = comparison(&report);
    save_json(&grid_dir.join("comparison.json"), &comparison)?;
    println!("comparison {comparison}");

    print_summary(json!({
        "command": "grid",
        "config_hash": hash,
        "rows": report.rows.len(),
        "failed": report.rows.iter().filter(|r| r.failed.is_some()).count(),
        "report_csv": csv_path.display().to_string(),
        "comparison": comparison,
    }));
    Ok(())
}
