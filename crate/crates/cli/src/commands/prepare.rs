//! Dataset preparation: area splits and the labeled dataset, k-means models
//! and cluster datasets, and the augmented LD30/LD50 variants.

use ndarray::Array2;
use serde_json::json;

use relict_core::clustering::{fit_kmeans, save_kmeans, FitOptions};
use relict_core::datasets::{
    augment_positives, balance_classes, build_cluster_dataset, build_labeled_dataset,
    load_labeled_dataset, save_cluster_dataset, save_labeled_dataset, LabeledDataset,
};
use relict_core::raster::{split_train_test, MultibandRaster, TileGrid};
use relict_core::training::DatasetVariant;

use crate::commands::{ensure_parent, load_scene_raster, load_scene_truth, print_summary, save_json};
use crate::config::PipelineConfig;
use crate::{missing_if_not_found, CliError, CliResult};

/// Concatenate per-scene datasets. Tiles keep their per-scene indices but
/// get renumbered scene ids matching config order; manifests are summed.
fn merge_labeled(parts: Vec<LabeledDataset>) -> CliResult<LabeledDataset> {
    let mut iter = parts.into_iter();
    let mut merged = iter.next().expect("config requires at least one scene");
    for (offset, mut part) in iter.enumerate() {
        let scene = (offset + 1) as u32;
        for tile in &mut part.tiles {
            tile.scene = scene;
        }
        merged.tiles.append(&mut part.tiles);
        let manifest = &mut merged.manifest;
        let incoming = part.manifest;
        for (class, count) in incoming.class_counts {
            *manifest.class_counts.entry(class).or_insert(0) += count;
        }
        manifest.total_tiles += incoming.total_tiles;
        manifest.dropped_nodata_tiles += incoming.dropped_nodata_tiles;
        manifest.source_scenes.extend(incoming.source_scenes);
        manifest.seeds.extend(incoming.seeds);
    }
    merged.manifest.validate()?;
    Ok(merged)
}

pub fn labeled(config: &PipelineConfig) -> CliResult<()> {
    let mut parts = Vec::new();
    let mut splits = Vec::new();
    for scene in &config.scenes {
        let raster = load_scene_raster(config, scene)?;
        let truth = load_scene_truth(config, scene, &raster)?;
        let split = split_train_test(&raster, &truth, config.dataset.split_ratio)?;
        save_json(&config.split_path(&scene.name), &split)?;
        let grid = TileGrid::for_raster(&raster, config.dataset.tile_size, config.dataset.pad_mode)?;
        let dataset = build_labeled_dataset(&scene.name, &raster, &truth, &grid, &split)?;
        splits.push(json!({
            "scene": scene.name,
            "achieved_ratio": split.achieved_ratio,
            "train_components": split.train_components,
            "test_components": split.test_components,
        }));
        parts.push(dataset);
    }
    let merged = merge_labeled(parts)?;
    let dir = config.labeled_dir();
    save_labeled_dataset(&merged, &dir, config.dataset.shard_records)?;
    print_summary(json!({
        "command": "prepare-labeled",
        "config_hash": config.config_hash(),
        "tiles": merged.manifest.total_tiles,
        "class_counts": merged.manifest.class_counts,
        "dropped_nodata_tiles": merged.manifest.dropped_nodata_tiles,
        "splits": splits,
        "dir": dir.display().to_string(),
    }));
    Ok(())
}

/// Valid pixels from every scene, shaped `(pixels, bands)` for the k-means
/// fit. Clustering is pooled: one model per k covers all scenes.
fn pooled_pixels(rasters: &[(&str, MultibandRaster)]) -> CliResult<Array2<f32>> {
    let bands = rasters[0].1.band_count();
    for (name, raster) in rasters {
        if raster.band_count() != bands {
            return Err(CliError::Config(format!(
                "scene `{name}` has {} bands, expected {bands}",
                raster.band_count()
            )));
        }
    }
    let mut values = Vec::new();
    let mut count = 0usize;
    for (_, raster) in rasters {
        let (b, h, w) = raster.data.dim();
        for row in 0..h {
            for col in 0..w {
                if !raster.nodata[[row, col]] {
                    for band in 0..b {
                        values.push(raster.data[[band, row, col]]);
                    }
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(CliError::Runtime(relict_core::Error::Cluster(
            "no valid pixels across the configured scenes".into(),
        )));
    }
    Ok(Array2::from_shape_vec((count, bands), values).expect("shape matches construction"))
}

pub fn cluster(config: &PipelineConfig) -> CliResult<()> {
    let mut rasters = Vec::new();
    for scene in &config.scenes {
        rasters.push((scene.name.as_str(), load_scene_raster(config, scene)?));
    }
    let pixels = pooled_pixels(&rasters)?;
    let scene_refs: Vec<(&str, &MultibandRaster)> =
        rasters.iter().map(|(name, raster)| (*name, raster)).collect();
    let options = FitOptions {
        standardize: config.dataset.kmeans_standardize,
        ..FitOptions::default()
    };

    let mut models = Vec::new();
    for &k in &config.dataset.k {
        let model = fit_kmeans(pixels.view(), k, config.dataset.kmeans_seed, &options)?;
        let model_path = config.cluster_model_path(k);
        ensure_parent(&model_path)?;
        save_kmeans(&model, &model_path)?;

        let dataset = build_cluster_dataset(
            &scene_refs,
            config.dataset.tile_size,
            config.dataset.pad_mode,
            &model,
        )?;
        let dataset = balance_classes(dataset, config.dataset.balance_seed)?;
        save_cluster_dataset(&dataset, &config.cluster_dataset_dir(k), config.dataset.shard_records)?;

        models.push(json!({
            "k": k,
            "inertia": model.inertia,
            "iterations": model.iterations_run,
            "tiles": dataset.manifest.total_tiles,
        }));
    }
    print_summary(json!({
        "command": "prepare-cluster",
        "config_hash": config.config_hash(),
        "pixels": pixels.nrows(),
        "models": models,
    }));
    Ok(())
}

pub fn augment(config: &PipelineConfig, only: Option<DatasetVariant>) -> CliResult<()> {
    let base = missing_if_not_found(
        load_labeled_dataset(&config.labeled_dir()),
        "labeled dataset",
        "prepare-labeled",
    )?;
    let variants: Vec<DatasetVariant> = match only {
        Some(v) => vec![v],
        None => DatasetVariant::ALL.to_vec(),
    };
    let mut built = Vec::new();
    for variant in variants {
        let factor = config.augment_factor(variant);
        let dataset = augment_positives(base.clone(), factor, config.dataset.augment_seed)?;
        save_labeled_dataset(&dataset, &config.variant_dir(variant), config.dataset.shard_records)?;
        built.push(json!({
            "variant": variant.as_str(),
            "factor": factor,
            "tiles": dataset.manifest.total_tiles,
            "class_counts": dataset.manifest.class_counts,
        }));
    }
    print_summary(json!({
        "command": "augment",
        "config_hash": config.config_hash(),
        "variants": built,
    }));
    Ok(())
}
