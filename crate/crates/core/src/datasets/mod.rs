//! Dataset construction: labeled segmentation tiles and cluster-labeled
//! tiles, class balancing, and flip augmentation.
//!
//! Tiles carry their pixels, validity channel, and provenance (scene index,
//! source window, flip code), so datasets are self-contained once built.
//! All-nodata tiles are dropped and the drop count recorded in the manifest.

mod shards;

pub use shards::{
    load_cluster_dataset, load_labeled_dataset, save_cluster_dataset, save_labeled_dataset,
    DatasetFile,
};

use std::collections::BTreeMap;

use ndarray::{s, Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{assign, predominant_label, KMeansModel};
use crate::error::{Error, Result};
use crate::raster::{
    AreaSplit, MaskRaster, MultibandRaster, PadMode, SplitSide, Tile, TileGrid,
};

/// Flip variants used for augmentation; the only photometric-free symmetries
/// of a square tile the pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flip {
    Identity,
    Horizontal,
    Vertical,
    Both,
}

pub const FLIP_CYCLE: [Flip; 4] = [Flip::Identity, Flip::Horizontal, Flip::Vertical, Flip::Both];

pub fn flip_mask(a: &Array2<u8>, f: Flip) -> Array2<u8> {
    match f {
        Flip::Identity => a.clone(),
        Flip::Horizontal => a.slice(s![.., ..;-1]).to_owned(),
        Flip::Vertical => a.slice(s![..;-1, ..]).to_owned(),
        Flip::Both => a.slice(s![..;-1, ..;-1]).to_owned(),
    }
}

pub fn flip_valid(a: &Array2<bool>, f: Flip) -> Array2<bool> {
    match f {
        Flip::Identity => a.clone(),
        Flip::Horizontal => a.slice(s![.., ..;-1]).to_owned(),
        Flip::Vertical => a.slice(s![..;-1, ..]).to_owned(),
        Flip::Both => a.slice(s![..;-1, ..;-1]).to_owned(),
    }
}

pub fn flip_pixels(a: &Array3<f32>, f: Flip) -> Array3<f32> {
    match f {
        Flip::Identity => a.clone(),
        Flip::Horizontal => a.slice(s![.., .., ..;-1]).to_owned(),
        Flip::Vertical => a.slice(s![.., ..;-1, ..]).to_owned(),
        Flip::Both => a.slice(s![.., ..;-1, ..;-1]).to_owned(),
    }
}

/// One segmentation sample: pixels plus the landslide mask window. `label`
/// is 1 iff the mask window holds at least one positive pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTile {
    pub tile: Tile,
    pub scene: u32,
    pub pixels: Array3<f32>,
    pub valid: Array2<bool>,
    pub target_mask: Array2<u8>,
    pub label: u8,
    pub area: SplitSide,
    pub flip: Flip,
}

/// One pre-training sample: pixels plus the tile's predominant cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTile {
    pub tile: Tile,
    pub scene: u32,
    pub pixels: Array3<f32>,
    pub valid: Array2<bool>,
    pub cluster_label: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Labeled,
    Cluster,
}

/// Summary statistics and provenance for a built dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_kind: DatasetKind,
    /// Labeled: train/test x negative/positive. Cluster: cluster_NN.
    pub class_counts: BTreeMap<String, usize>,
    pub total_tiles: usize,
    pub dropped_nodata_tiles: usize,
    pub source_scenes: Vec<String>,
    pub tile_size: usize,
    pub pad_mode: PadMode,
    pub k: Option<usize>,
    /// 0 while unaugmented.
    pub augmentation_factor: usize,
    pub split_ratio: Option<f64>,
    pub seeds: BTreeMap<String, u64>,
}

impl DatasetManifest {
    /// Counts must sum to the total.
    pub fn validate(&self) -> Result<()> {
        let sum: usize = self.class_counts.values().sum();
        if sum != self.total_tiles {
            return Err(Error::Dataset(format!(
                "manifest counts sum to {sum}, total says {}",
                self.total_tiles
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub tiles: Vec<LabeledTile>,
    pub manifest: DatasetManifest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDataset {
    pub tiles: Vec<ClusterTile>,
    pub manifest: DatasetManifest,
}

fn labeled_class_key(area: SplitSide, label: u8) -> String {
    let side = match area {
        SplitSide::Train => "train",
        SplitSide::Test => "test",
    };
    let class = if label == 1 { "positive" } else { "negative" };
    format!("{side}_{class}")
}

fn cluster_class_key(label: u32) -> String {
    format!("cluster_{label:02}")
}

fn recount_labeled(manifest: &mut DatasetManifest, tiles: &[LabeledTile]) {
    let mut counts = BTreeMap::new();
    for side in [SplitSide::Train, SplitSide::Test] {
        for label in [0u8, 1] {
            counts.insert(labeled_class_key(side, label), 0);
        }
    }
    for t in tiles {
        *counts.get_mut(&labeled_class_key(t.area, t.label)).unwrap() += 1;
    }
    manifest.class_counts = counts;
    manifest.total_tiles = tiles.len();
}

fn recount_cluster(manifest: &mut DatasetManifest, tiles: &[ClusterTile], k: usize) {
    let mut counts = BTreeMap::new();
    for c in 0..k {
        counts.insert(cluster_class_key(c as u32), 0);
    }
    for t in tiles {
        *counts.get_mut(&cluster_class_key(t.cluster_label)).unwrap() += 1;
    }
    manifest.class_counts = counts;
    manifest.total_tiles = tiles.len();
}

/// Tile a scene and label every tile by mask intersection; tiles whose
/// window is not fully inside the train region go to test.
pub fn build_labeled_dataset(
    scene_name: &str,
    raster: &MultibandRaster,
    mask: &MaskRaster,
    grid: &TileGrid,
    split: &AreaSplit,
) -> Result<LabeledDataset> {
    let mut tiles = Vec::with_capacity(grid.tile_count());
    let mut dropped = 0usize;
    for tile in grid.tiles() {
        let pixels = grid.extract(raster, &tile)?;
        if !pixels.valid.iter().any(|&v| v) {
            dropped += 1;
            continue;
        }
        let target_mask = grid.extract_mask(mask, &tile)?;
        let label = u8::from(target_mask.iter().any(|&v| v == 1));
        let area = split.side_of_window(tile.x0, tile.y0, tile.width, tile.height);
        tiles.push(LabeledTile {
            tile,
            scene: 0,
            pixels: pixels.data,
            valid: pixels.valid,
            target_mask,
            label,
            area,
            flip: Flip::Identity,
        });
    }
    let mut manifest = DatasetManifest {
        dataset_kind: DatasetKind::Labeled,
        class_counts: BTreeMap::new(),
        total_tiles: 0,
        dropped_nodata_tiles: dropped,
        source_scenes: vec![scene_name.to_string()],
        tile_size: grid.tile_size(),
        pad_mode: grid.pad_mode(),
        k: None,
        augmentation_factor: 0,
        split_ratio: Some(split.achieved_ratio),
        seeds: BTreeMap::new(),
    };
    recount_labeled(&mut manifest, &tiles);
    manifest.validate()?;
    Ok(LabeledDataset { tiles, manifest })
}

/// Tile every scene and label each tile with the predominant cluster of its
/// valid pixels under the fitted model.
pub fn build_cluster_dataset(
    scenes: &[(&str, &MultibandRaster)],
    tile_size: usize,
    pad_mode: PadMode,
    model: &KMeansModel,
) -> Result<ClusterDataset> {
    if scenes.is_empty() {
        return Err(Error::Dataset("cluster dataset needs at least one scene".into()));
    }
    let mut tiles = Vec::new();
    let mut dropped = 0usize;
    for (scene_idx, (_, raster)) in scenes.iter().enumerate() {
        if raster.band_count() != model.band_count() {
            return Err(Error::Dataset(format!(
                "scene has {} bands, model expects {}",
                raster.band_count(),
                model.band_count()
            )));
        }
        let grid = TileGrid::for_raster(raster, tile_size, pad_mode)?;
        let s = tile_size;
        for tile in grid.tiles() {
            let pixels = grid.extract(raster, &tile)?;
            if !pixels.valid.iter().any(|&v| v) {
                dropped += 1;
                continue;
            }
            // Row-major pixel table matching the validity flattening order.
            let mut table = Array2::<f32>::zeros((s * s, raster.band_count()));
            for i in 0..s {
                for j in 0..s {
                    for b in 0..raster.band_count() {
                        table[[i * s + j, b]] = pixels.data[[b, i, j]];
                    }
                }
            }
            let labels = assign(model, table.view())?;
            let validity: Vec<bool> = pixels.valid.iter().copied().collect();
            let cluster_label = predominant_label(&labels, &validity)?;
            tiles.push(ClusterTile {
                tile,
                scene: scene_idx as u32,
                pixels: pixels.data,
                valid: pixels.valid,
                cluster_label,
            });
        }
    }
    let mut manifest = DatasetManifest {
        dataset_kind: DatasetKind::Cluster,
        class_counts: BTreeMap::new(),
        total_tiles: 0,
        dropped_nodata_tiles: dropped,
        source_scenes: scenes.iter().map(|(n, _)| n.to_string()).collect(),
        tile_size,
        pad_mode,
        k: Some(model.k),
        augmentation_factor: 0,
        split_ratio: None,
        seeds: BTreeMap::new(),
    };
    recount_cluster(&mut manifest, &tiles, model.k);
    manifest.validate()?;
    Ok(ClusterDataset { tiles, manifest })
}

/// Seeded uniform undersampling of every cluster class down to the minority
/// count. Input order is preserved; every class in [0, k) must be present.
pub fn balance_classes(dataset: ClusterDataset, seed: u64) -> Result<ClusterDataset> {
    let ClusterDataset { tiles, mut manifest } = dataset;
    let k = manifest
        .k
        .ok_or_else(|| Error::Dataset("cluster manifest is missing k".into()))?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, t) in tiles.iter().enumerate() {
        let c = t.cluster_label as usize;
        if c >= k {
            return Err(Error::Dataset(format!("cluster label {c} out of range for k={k}")));
        }
        by_class[c].push(i);
    }
    let minority = by_class.iter().map(Vec::len).min().unwrap_or(0);
    if minority == 0 {
        let empty = by_class.iter().position(Vec::is_empty).unwrap();
        return Err(Error::Dataset(format!(
            "cannot balance: cluster {empty} has no tiles"
        )));
    }
    let mut keep = vec![false; tiles.len()];
    for (c, members) in by_class.iter().enumerate() {
        if members.len() == minority {
            for &i in members {
                keep[i] = true;
            }
            continue;
        }
        let mut rng = crate::util::seeded_rng(seed, &format!("balance-class-{c}"));
        for pick in rand::seq::index::sample(&mut rng, members.len(), minority) {
            keep[members[pick]] = true;
        }
    }
    let tiles: Vec<ClusterTile> = tiles
        .into_iter()
        .zip(keep)
        .filter_map(|(t, k)| k.then_some(t))
        .collect();
    recount_cluster(&mut manifest, &tiles, k);
    manifest.seeds.insert("balance".into(), seed);
    manifest.validate()?;
    Ok(ClusterDataset { tiles, manifest })
}

/// Expand every positive train tile into `factor` flip variants, cycling
/// {identity, h, v, hv} from a seeded per-tile phase. Negatives and test
/// tiles pass through unchanged.
pub fn augment_positives(dataset: LabeledDataset, factor: usize, seed: u64) -> Result<LabeledDataset> {
    if factor < 1 {
        return Err(Error::Dataset(format!("augmentation factor must be >= 1, got {factor}")));
    }
    let LabeledDataset { tiles, mut manifest } = dataset;
    let mut out = Vec::with_capacity(tiles.len());
    for t in tiles {
        if !(t.label == 1 && t.area == SplitSide::Train) {
            out.push(t);
            continue;
        }
        let mut rng =
            crate::util::seeded_rng(seed, &format!("augment-{}-{}", t.scene, t.tile.index));
        let phase: usize = rng.gen_range(0..FLIP_CYCLE.len());
        for v in 0..factor {
            let flip = FLIP_CYCLE[(phase + v) % FLIP_CYCLE.len()];
            out.push(LabeledTile {
                tile: t.tile,
                scene: t.scene,
                pixels: flip_pixels(&t.pixels, flip),
                valid: flip_valid(&t.valid, flip),
                target_mask: flip_mask(&t.target_mask, flip),
                label: 1,
                area: SplitSide::Train,
                flip,
            });
        }
    }
    recount_labeled(&mut manifest, &out);
    manifest.augmentation_factor = factor;
    manifest.seeds.insert("augment".into(), seed);
    manifest.validate()?;
    Ok(LabeledDataset { tiles: out, manifest })
}


#[cfg(test)]
mod tests {
    use super::tests_support::{labeled_fixture, scene_with_mask};
    use super::*;
    use crate::raster::testutil::random_raster;
    use crate::raster::{split_train_test, GeoTransform};
    use ndarray::Array2;
    use rand::Rng;

    #[test]
    fn all_zero_mask_gives_all_negative_labels() {
        let raster = random_raster(64, 64, 41);
        let mask = MaskRaster::new(
            Array2::<u8>::zeros((64, 64)),
            GeoTransform::default(),
            None,
        )
        .unwrap();
        let grid = TileGrid::for_raster(&raster, 16, PadMode::ZeroPad).unwrap();
        // A synthetic split: the real one needs components.
        let split = AreaSplit {
            axis: crate::raster::SplitAxis::Vertical,
            cut: 32,
            train_region: crate::raster::PixelRect { x0: 0, y0: 0, width: 32, height: 64 },
            test_region: crate::raster::PixelRect { x0: 32, y0: 0, width: 32, height: 64 },
            train_components: 1,
            test_components: 1,
            achieved_ratio: 0.5,
        };
        let ds = build_labeled_dataset("scene", &raster, &mask, &grid, &split).unwrap();
        assert!(ds.tiles.iter().all(|t| t.label == 0));
        assert_eq!(ds.manifest.class_counts["train_positive"], 0);
        assert_eq!(ds.manifest.class_counts["test_positive"], 0);
        assert_eq!(ds.manifest.total_tiles, 16);
    }

    #[test]
    fn single_mask_pixel_yields_one_positive_tile() {
        let (raster, _) = scene_with_mask(64, 64);
        let mut values = Array2::<u8>::zeros((64, 64));
        values[[40, 9]] = 1;
        // split_train_test needs two components; use a fixed split instead.
        let split = AreaSplit {
            axis: crate::raster::SplitAxis::Vertical,
            cut: 32,
            train_region: crate::raster::PixelRect { x0: 0, y0: 0, width: 32, height: 64 },
            test_region: crate::raster::PixelRect { x0: 32, y0: 0, width: 32, height: 64 },
            train_components: 1,
            test_components: 1,
            achieved_ratio: 0.5,
        };
        let mask = MaskRaster::new(values, GeoTransform::default(), None).unwrap();
        let grid = TileGrid::for_raster(&raster, 16, PadMode::ZeroPad).unwrap();
        let ds = build_labeled_dataset("scene", &raster, &mask, &grid, &split).unwrap();
        let positives: Vec<_> = ds.tiles.iter().filter(|t| t.label == 1).collect();
        assert_eq!(positives.len(), 1);
        assert_eq!((positives[0].tile.grid_row, positives[0].tile.grid_col), (2, 0));
    }

    #[test]
    fn positive_count_matches_brute_force_scan() {
        let mut rng = crate::util::seeded_rng(42, "mask-noise");
        let mut values = Array2::<u8>::zeros((128, 128));
        for v in values.iter_mut() {
            if rng.gen_range(0..100) < 3 {
                *v = 1;
            }
        }
        let raster = random_raster(128, 128, 43);
        let mask = MaskRaster::new(values.clone(), GeoTransform::default(), None).unwrap();
        let grid = TileGrid::for_raster(&raster, 32, PadMode::ZeroPad).unwrap();
        let split = split_train_test(&raster, &mask, 0.7).unwrap();
        let ds = build_labeled_dataset("scene", &raster, &mask, &grid, &split).unwrap();

        // Oracle: scan every 32x32 window of the mask directly.
        let mut want = 0;
        for tr in 0..4 {
            for tc in 0..4 {
                let window = values.slice(ndarray::s![tr * 32..(tr + 1) * 32, tc * 32..(tc + 1) * 32]);
                if window.iter().any(|&v| v == 1) {
                    want += 1;
                }
            }
        }
        let got = ds.tiles.iter().filter(|t| t.label == 1).count();
        assert_eq!(got, want);

        // Label rule equivalence, exhaustively.
        for t in &ds.tiles {
            assert_eq!(t.label == 1, t.target_mask.iter().any(|&v| v == 1));
        }
    }

    #[test]
    fn nodata_tiles_are_dropped_and_recorded() {
        let (mut raster, mask) = scene_with_mask(64, 64);
        // Void the bottom-right 16x16 tile completely.
        for i in 48..64 {
            for j in 48..64 {
                raster.nodata[[i, j]] = true;
                for b in 0..raster.band_count() {
                    raster.data[[b, i, j]] = 0.0;
                }
            }
        }
        let grid = TileGrid::for_raster(&raster, 16, PadMode::ZeroPad).unwrap();
        let split = split_train_test(&raster, &mask, 0.5).unwrap();
        let ds = build_labeled_dataset("scene", &raster, &mask, &grid, &split).unwrap();
        assert_eq!(ds.manifest.dropped_nodata_tiles, 1);
        assert_eq!(ds.manifest.total_tiles, 15);
        assert!(ds.manifest.validate().is_ok());
    }

    #[test]
    fn uniform_scene_clusters_to_one_label() {
        let mut raster = random_raster(32, 32, 44);
        raster.data.fill(7.5);
        // Model with centroids away from and at the scene color.
        let model = KMeansModel {
            k: 3,
            centroids: ndarray::arr2(&[[0.0; 4], [7.5; 4], [100.0; 4]]),
            inertia: 0.0,
            iterations_run: 1,
            seed: 0,
            scaling: None,
        };
        let ds = build_cluster_dataset(&[("s1", &raster)], 8, PadMode::ZeroPad, &model).unwrap();
        assert_eq!(ds.tiles.len(), 16);
        assert!(ds.tiles.iter().all(|t| t.cluster_label == 1));
        assert_eq!(ds.manifest.class_counts["cluster_01"], 16);
        assert_eq!(ds.manifest.class_counts["cluster_00"], 0);
    }

    #[test]
    fn balanced_halves_give_equal_counts() {
        let mut raster = random_raster(64, 32, 45);
        // Left half near 0, right half near 50.
        for i in 0..32 {
            for j in 0..64 {
                let base = if j < 32 { 0.0 } else { 50.0 };
                for b in 0..4 {
                    raster.data[[b, i, j]] = base + raster.data[[b, i, j]] * 0.01;
                }
            }
        }
        let model = KMeansModel {
            k: 2,
            centroids: ndarray::arr2(&[[0.0; 4], [50.0; 4]]),
            inertia: 0.0,
            iterations_run: 1,
            seed: 0,
            scaling: None,
        };
        let ds = build_cluster_dataset(&[("s1", &raster)], 8, PadMode::ZeroPad, &model).unwrap();
        assert_eq!(ds.manifest.class_counts["cluster_00"], 16);
        assert_eq!(ds.manifest.class_counts["cluster_01"], 16);
    }

    #[test]
    fn balancing_undersamples_to_the_minority() {
        let mut raster = random_raster(80, 16, 46);
        // 10 column-tiles of class 0, then 4... make 8px tiles: widths 80 -> 10 tiles.
        for i in 0..16 {
            for j in 0..80 {
                let base = if j < 48 { 0.0 } else { 50.0 };
                for b in 0..4 {
                    raster.data[[b, i, j]] = base;
                }
            }
        }
        let model = KMeansModel {
            k: 2,
            centroids: ndarray::arr2(&[[0.0; 4], [50.0; 4]]),
            inertia: 0.0,
            iterations_run: 1,
            seed: 0,
            scaling: None,
        };
        let ds = build_cluster_dataset(&[("s1", &raster)], 8, PadMode::ZeroPad, &model).unwrap();
        assert_eq!(ds.manifest.class_counts["cluster_00"], 12);
        assert_eq!(ds.manifest.class_counts["cluster_01"], 8);

        let balanced = balance_classes(ds.clone(), 99).unwrap();
        assert_eq!(balanced.manifest.class_counts["cluster_00"], 8);
        assert_eq!(balanced.manifest.class_counts["cluster_01"], 8);
        assert_eq!(balanced.manifest.total_tiles, 16);

        // Same seed, same selection.
        let again = balance_classes(ds.clone(), 99).unwrap();
        assert_eq!(again.tiles, balanced.tiles);

        // Already balanced input passes through identically.
        let idempotent = balance_classes(balanced.clone(), 7).unwrap();
        assert_eq!(idempotent.tiles, balanced.tiles);
    }

    #[test]
    fn balancing_rejects_an_empty_class() {
        let raster = random_raster(16, 16, 47);
        let model = KMeansModel {
            k: 2,
            centroids: ndarray::arr2(&[[0.0; 4], [1e6; 4]]),
            inertia: 0.0,
            iterations_run: 1,
            seed: 0,
            scaling: None,
        };
        let ds = build_cluster_dataset(&[("s1", &raster)], 8, PadMode::ZeroPad, &model).unwrap();
        assert!(balance_classes(ds, 1).is_err());
    }

    #[test]
    fn augmentation_multiplies_train_positives_exactly() {
        let ds = labeled_fixture(64, 64, 8);
        let train_pos = ds.manifest.class_counts["train_positive"];
        let others = ds.manifest.total_tiles - train_pos;
        assert!(train_pos > 0);

        let factor = 30;
        let aug = augment_positives(ds, factor, 5).unwrap();
        assert_eq!(aug.manifest.class_counts["train_positive"], factor * train_pos);
        assert_eq!(aug.manifest.total_tiles, factor * train_pos + others);
        assert_eq!(aug.manifest.augmentation_factor, factor);

        // Mask positive count is flip-invariant.
        for t in aug.tiles.iter().filter(|t| t.flip != Flip::Identity) {
            let unflipped = flip_mask(&t.target_mask, t.flip);
            assert_eq!(
                t.target_mask.iter().filter(|&&v| v == 1).count(),
                unflipped.iter().filter(|&&v| v == 1).count()
            );
        }
        assert!(augment_positives(aug, 0, 5).is_err());
    }

    #[test]
    fn flips_compose_as_expected() {
        let ds = labeled_fixture(32, 32, 8);
        let t = &ds.tiles[3];
        let h = flip_pixels(&t.pixels, Flip::Horizontal);
        let hh = flip_pixels(&h, Flip::Horizontal);
        assert_eq!(hh, t.pixels);

        let hv = flip_pixels(&flip_pixels(&t.pixels, Flip::Horizontal), Flip::Vertical);
        let both = flip_pixels(&t.pixels, Flip::Both);
        assert_eq!(hv, both);

        // Flip geometry: horizontal mirrors columns.
        let m = &t.pixels;
        let f = flip_pixels(m, Flip::Horizontal);
        let (_, _, w) = m.dim();
        assert_eq!(f[[0, 2, 0]], m[[0, 2, w - 1]]);
    }

    #[test]
    fn straddling_tiles_land_in_test() {
        let (raster, mask) = scene_with_mask(64, 64);
        let grid = TileGrid::for_raster(&raster, 16, PadMode::ZeroPad).unwrap();
        let split = split_train_test(&raster, &mask, 0.5).unwrap();
        let ds = build_labeled_dataset("scene", &raster, &mask, &grid, &split).unwrap();
        for t in &ds.tiles {
            let inside_train = split.train_region.contains_window(
                t.tile.x0,
                t.tile.y0,
                t.tile.width,
                t.tile.height,
            );
            assert_eq!(t.area == SplitSide::Train, inside_train);
        }
        // With a vertical cut off the tile grid lines, at least one tile
        // straddles and must be test.
        if split.axis == crate::raster::SplitAxis::Vertical && split.cut % 16 != 0 {
            let straddlers = ds
                .tiles
                .iter()
                .filter(|t| {
                    t.tile.x0 < split.cut && t.tile.x0 + t.tile.width > split.cut
                })
                .count();
            assert!(straddlers > 0);
            assert!(ds
                .tiles
                .iter()
                .filter(|t| t.tile.x0 < split.cut && t.tile.x0 + t.tile.width > split.cut)
                .all(|t| t.area == SplitSide::Test));
        }
    }
}
