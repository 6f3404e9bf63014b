//! Evaluation: whole-scene prediction, 0.5 thresholding, pixel-level
//! TP/FP/FN/TN accounting with precision and recall, color-coded outcome
//! maps, and the combination grid report.
//!
//! All counting is restricted to valid pixels: nodata cells and, under crop
//! tiling, uncovered margins are excluded and the evaluated-pixel count is
//! reported next to the confusion counts.

use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3, Array4, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{load_checkpoint, Architecture, Checkpoint, Framework, Network, Provenance};
use crate::raster::{stitch, GeoTransform, MaskRaster, MultibandRaster, PadMode, TileGrid};
use crate::training::{combination_dir, DatasetVariant, CLUSTER_COUNTS};

/// Outcome codes in the per-pixel map.
pub const OUTCOME_TN: u8 = 0;
pub const OUTCOME_TP: u8 = 1;
pub const OUTCOME_FP: u8 = 2;
pub const OUTCOME_FN: u8 = 3;
/// Pixels outside the evaluated set (nodata or uncovered).
pub const OUTCOME_VOID: u8 = 255;

/// One cell of the sweep: which framework, architecture, cluster count, and
/// mask variant produced a model. Orders by (framework, arch, k, dataset),
/// the row order of the grid report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CombinationId {
    pub framework: Framework,
    pub architecture: Architecture,
    pub k: Option<u32>,
    pub variant: DatasetVariant,
}

impl CombinationId {
    pub fn dir(&self, root: &Path) -> PathBuf {
        combination_dir(root, self.framework, self.architecture, self.k, self.variant)
    }
}

impl std::fmt::Display for CombinationId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let k = match self.k {
            Some(k) => format!("k{k}"),
            None => "kna".into(),
        };
        write!(
            f,
            "{}/{}/{}/{}",
            self.framework, self.architecture, k, self.variant
        )
    }
}

/// Every combination of the full sweep: 3 architectures x 2 mask variants
/// under the standard framework, times 6 cluster counts under the proposed
/// one. 42 in total, sorted.
pub fn full_grid() -> Vec<CombinationId> {
    let mut rows = Vec::with_capacity(42);
    for arch in Architecture::SEGMENTATION {
        for variant in DatasetVariant::ALL {
            rows.push(CombinationId {
                framework: Framework::Standard,
                architecture: arch,
                k: None,
                variant,
            });
            for k in CLUSTER_COUNTS {
                rows.push(CombinationId {
                    framework: Framework::Proposed,
                    architecture: arch,
                    k: Some(k),
                    variant,
                });
            }
        }
    }
    rows.sort();
    rows
}

/// How a scene is tiled and thresholded at inference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    pub threshold: f32,
    pub tile_size: usize,
    pub pad_mode: PadMode,
    /// Tiles per forward pass.
    pub batch_size: usize,
}

impl PredictOptions {
    pub fn new(tile_size: usize, pad_mode: PadMode) -> Self {
        Self {
            threshold: 0.5,
            tile_size,
            pad_mode,
            batch_size: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Evaluation(format!(
                "threshold must lie in (0,1), got {}",
                self.threshold
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Evaluation("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// A stitched whole-scene prediction. `binary` is 1 exactly where
/// `probabilities` exceed the threshold strictly; `valid` marks pixels that
/// count for evaluation (covered by a tile and not nodata).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRaster {
    pub probabilities: Array2<f32>,
    pub binary: Array2<u8>,
    pub valid: Array2<bool>,
    pub threshold: f32,
    pub provenance: Provenance,
}

impl PredictionRaster {
    /// Derive the binary mask from probabilities. Invalid pixels are forced
    /// to probability 0 and excluded.
    pub fn from_probabilities(
        mut probabilities: Array2<f32>,
        valid: Array2<bool>,
        threshold: f32,
        provenance: Provenance,
    ) -> Result<Self> {
        if probabilities.dim() != valid.dim() {
            return Err(Error::Evaluation(format!(
                "probability grid {:?} does not match valid grid {:?}",
                probabilities.dim(),
                valid.dim()
            )));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::Evaluation(format!(
                "threshold must lie in (0,1), got {threshold}"
            )));
        }
        Zip::from(&mut probabilities).and(&valid).for_each(|p, &v| {
            if !v {
                *p = 0.0;
            }
        });
        let binary = probabilities.mapv(|p| (p > threshold) as u8);
        Ok(Self {
            probabilities,
            binary,
            valid,
            threshold,
            provenance,
        })
    }

    pub fn positive_count(&self) -> u64 {
        self.binary.iter().map(|&b| b as u64).sum()
    }
}

/// Tile a scene with the training grid, run the segmenter over every tile in
/// batches, stitch the probabilities back (padding discarded), and threshold.
/// Nodata pixels come back with probability 0 and `valid == false`.
pub fn predict_scene_with(
    network: &mut Network<f32>,
    provenance: Provenance,
    raster: &MultibandRaster,
    opts: &PredictOptions,
) -> Result<PredictionRaster> {
    opts.validate()?;
    if network.spec.output_classes != 1 || network.spec.architecture == Architecture::Classifier {
        return Err(Error::Evaluation(
            "scene prediction needs a segmentation network".into(),
        ));
    }
    let bands = network.spec.encoder.input_channels;
    if raster.band_count() != bands {
        return Err(Error::Evaluation(format!(
            "raster has {} bands, model expects {bands}",
            raster.band_count()
        )));
    }
    let grid = TileGrid::for_raster(raster, opts.tile_size, opts.pad_mode)?;
    let tiles: Vec<_> = grid.tiles().collect();
    let s = opts.tile_size;

    let mut prob_tiles: Vec<Array2<f32>> = Vec::with_capacity(tiles.len());
    for chunk in tiles.chunks(opts.batch_size) {
        let mut x = Array4::<f32>::zeros((chunk.len(), bands, s, s));
        let mut valids: Vec<Array2<bool>> = Vec::with_capacity(chunk.len());
        for (row, tile) in chunk.iter().enumerate() {
            let pixels = grid.extract(raster, tile)?;
            x.slice_mut(s![row, .., .., ..]).assign(&pixels.data);
            valids.push(pixels.valid);
        }
        let probs = network.predict_seg(&x)?;
        for (row, valid) in valids.into_iter().enumerate() {
            let mut tile_probs = probs.slice(s![row, 0, .., ..]).to_owned();
            Zip::from(&mut tile_probs).and(&valid).for_each(|p, &v| {
                if !v {
                    *p = 0.0;
                }
            });
            prob_tiles.push(tile_probs);
        }
    }

    let (probabilities, covered) = stitch(&grid, &prob_tiles)?;
    let mut valid = covered;
    Zip::from(&mut valid)
        .and(&raster.nodata)
        .for_each(|v, &nd| *v = *v && !nd);
    PredictionRaster::from_probabilities(probabilities, valid, opts.threshold, provenance)
}

/// [`predict_scene_with`] starting from a saved checkpoint; the checkpoint's
/// provenance is carried onto the prediction.
pub fn predict_scene(
    checkpoint: Checkpoint,
    raster: &MultibandRaster,
    opts: &PredictOptions,
) -> Result<PredictionRaster> {
    let provenance = checkpoint.provenance.clone();
    let mut network = checkpoint.into_network()?;
    predict_scene_with(&mut network, provenance, raster, opts)
}

/// Pixel confusion over the valid area, with precision and recall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
    /// Number of valid pixels; the four counts above sum to it.
    pub evaluated: u64,
    pub precision: f64,
    pub recall: f64,
    /// False when TP+FP = 0; precision is then reported as 0.
    pub precision_defined: bool,
    /// False when TP+FN = 0; recall is then reported as 0.
    pub recall_defined: bool,
    #[serde(skip)]
    pub outcome_map: Array2<u8>,
    pub provenance: Provenance,
}

/// Count TP/FP/FN/TN between a binary prediction and the truth mask over the
/// valid pixels, and build the outcome map. Any nonzero mask value counts as
/// positive. Undefined ratios come back as 0 with their flag cleared.
pub fn confusion(
    pred: &Array2<u8>,
    truth: &Array2<u8>,
    valid: &Array2<bool>,
    provenance: Provenance,
) -> Result<EvalReport> {
    if pred.dim() != truth.dim() || pred.dim() != valid.dim() {
        return Err(Error::Evaluation(format!(
            "confusion inputs disagree: pred {:?}, truth {:?}, valid {:?}",
            pred.dim(),
            truth.dim(),
            valid.dim()
        )));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut tn = 0u64;
    let mut outcome_map = Array2::from_elem(pred.dim(), OUTCOME_VOID);
    Zip::from(&mut outcome_map)
        .and(pred)
        .and(truth)
        .and(valid)
        .for_each(|o, &p, &t, &v| {
            if !v {
                return;
            }
            *o = match (p != 0, t != 0) {
                (true, true) => {
                    tp += 1;
                    OUTCOME_TP
                }
                (true, false) => {
                    fp += 1;
                    OUTCOME_FP
                }
                (false, true) => {
                    fn_ += 1;
                    OUTCOME_FN
                }
                (false, false) => {
                    tn += 1;
                    OUTCOME_TN
                }
            };
        });
    let precision_defined = tp + fp > 0;
    let recall_defined = tp + fn_ > 0;
    Ok(EvalReport {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        evaluated: tp + fp + fn_ + tn,
        precision: if precision_defined {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        },
        recall: if recall_defined {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        },
        precision_defined,
        recall_defined,
        outcome_map,
        provenance,
    })
}

/// [`confusion`] of a stitched prediction against a truth mask. The rasters
/// must share extent; validity comes from the prediction.
pub fn evaluate_prediction(pred: &PredictionRaster, truth: &MaskRaster) -> Result<EvalReport> {
    confusion(
        &pred.binary,
        &truth.values,
        &pred.valid,
        pred.provenance.clone(),
    )
}

/// RGB used in outcome maps, one color per class, all distinct.
pub const OUTCOME_COLORS: [(u8, [f32; 3]); 4] = [
    (OUTCOME_TN, [0.12, 0.12, 0.12]),
    (OUTCOME_TP, [0.0, 0.8, 0.2]),
    (OUTCOME_FP, [0.9, 0.1, 0.1]),
    (OUTCOME_FN, [1.0, 0.8, 0.0]),
];

#[derive(Debug, Serialize, Deserialize)]
struct LegendEntry {
    class: String,
    code: u8,
    color: [f32; 3],
    pixels: u64,
}

/// Write the outcome map as a 3-band RGB raster (format chosen by the path
/// extension) plus a JSON legend sidecar at `<path>.legend.json`. Void pixels
/// become nodata.
pub fn render_outcome_map(
    report: &EvalReport,
    transform: GeoTransform,
    crs: &str,
    path: &Path,
) -> Result<()> {
    let (h, w) = report.outcome_map.dim();
    if h == 0 || w == 0 {
        return Err(Error::Evaluation("outcome map is empty".into()));
    }
    let mut data = Array3::<f32>::zeros((3, h, w));
    let mut nodata = Array2::from_elem((h, w), false);
    for r in 0..h {
        for c in 0..w {
            let code = report.outcome_map[[r, c]];
            match OUTCOME_COLORS.iter().find(|(k, _)| *k == code) {
                Some((_, rgb)) => {
                    for (b, v) in rgb.iter().enumerate() {
                        data[[b, r, c]] = *v;
                    }
                }
                None => nodata[[r, c]] = true,
            }
        }
    }
    let raster = MultibandRaster {
        data,
        nodata,
        band_names: vec!["red".into(), "green".into(), "blue".into()],
        transform,
        crs: Some(crs.to_string()),
    };
    crate::raster::save_raster(&raster, path)?;

    let legend: Vec<LegendEntry> = [
        ("true_negative", OUTCOME_TN, report.true_negatives),
        ("true_positive", OUTCOME_TP, report.true_positives),
        ("false_positive", OUTCOME_FP, report.false_positives),
        ("false_negative", OUTCOME_FN, report.false_negatives),
    ]
    .into_iter()
    .map(|(class, code, pixels)| LegendEntry {
        class: class.to_string(),
        code,
        color: OUTCOME_COLORS.iter().find(|(k, _)| *k == code).unwrap().1,
        pixels,
    })
    .collect();
    let legend_path = sidecar_path(path, "legend.json");
    let json = serde_json::to_vec_pretty(&legend).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(&legend_path, json).map_err(|e| Error::io(&legend_path, e))
}

fn sidecar_path(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

/// One line of the grid report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub combination: CombinationId,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    /// Highest precision among this architecture's successful rows.
    pub best_precision: bool,
    /// Highest recall among this architecture's successful rows.
    pub best_recall: bool,
    /// Why the combination produced no numbers, when it failed.
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
}

impl GridReport {
    /// Assemble rows from per-combination results, sort them by
    /// (framework, arch, k, dataset), and flag per-architecture maxima.
    pub fn from_results(
        results: Vec<(CombinationId, std::result::Result<EvalReport, String>)>,
    ) -> Self {
        let mut rows: Vec<GridRow> = results
            .into_iter()
            .map(|(combination, outcome)| match outcome {
                Ok(report) => GridRow {
                    combination,
                    true_positives: report.true_positives,
                    false_positives: report.false_positives,
                    false_negatives: report.false_negatives,
                    precision: report.precision,
                    recall: report.recall,
                    precision_defined: report.precision_defined,
                    recall_defined: report.recall_defined,
                    best_precision: false,
                    best_recall: false,
                    failed: None,
                },
                Err(reason) => GridRow {
                    combination,
                    true_positives: 0,
                    false_positives: 0,
                    false_negatives: 0,
                    precision: 0.0,
                    recall: 0.0,
                    precision_defined: false,
                    recall_defined: false,
                    best_precision: false,
                    best_recall: false,
                    failed: Some(reason),
                },
            })
            .collect();
        rows.sort_by_key(|r| r.combination);

        for arch in Architecture::SEGMENTATION {
            let ok = |r: &GridRow| r.combination.architecture == arch && r.failed.is_none();
            let best_p = rows
                .iter()
                .filter(|r| ok(r))
                .map(|r| r.precision)
                .fold(f64::NEG_INFINITY, f64::max);
            let best_r = rows
                .iter()
                .filter(|r| ok(r))
                .map(|r| r.recall)
                .fold(f64::NEG_INFINITY, f64::max);
            for row in rows.iter_mut().filter(|r| ok(r)) {
                row.best_precision = row.precision == best_p;
                row.best_recall = row.recall == best_r;
            }
        }
        Self { rows }
    }

    /// Delimited table: one row per combination, fixed column order, flags as
    /// semicolon-separated tokens.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("framework,arch,k,dataset,tp,fp,fn,precision,recall,flags\n");
        for row in &self.rows {
            let k = match row.combination.k {
                Some(k) => k.to_string(),
                None => "na".into(),
            };
            let mut flags: Vec<&str> = Vec::new();
            if row.best_precision {
                flags.push("best_precision");
            }
            if row.best_recall {
                flags.push("best_recall");
            }
            if !row.precision_defined {
                flags.push("undefined_precision");
            }
            if !row.recall_defined {
                flags.push("undefined_recall");
            }
            if row.failed.is_some() {
                flags.push("failed");
            }
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.6},{:.6},{}\n",
                row.combination.framework,
                row.combination.architecture,
                k,
                row.combination.variant,
                row.true_positives,
                row.false_positives,
                row.false_negatives,
                row.precision,
                row.recall,
                flags.join(";")
            ));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

/// Final checkpoint (highest epoch number) inside one combination directory.
pub fn final_checkpoint_path(dir: &Path) -> Result<PathBuf> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(epoch) = name
            .strip_prefix("epoch_")
            .and_then(|r| r.strip_suffix(".ckpt"))
            .and_then(|n| n.parse::<u64>().ok())
        else {
            continue;
        };
        if best.as_ref().map_or(true, |(e, _)| epoch > *e) {
            best = Some((epoch, entry.path()));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::Evaluation(format!("no epoch_<n>.ckpt files in {}", dir.display())))
}

/// Evaluate trained combinations against a truth mask. Each combination's
/// final checkpoint under `root` predicts the scene; missing or unreadable
/// checkpoints mark their row failed and the run continues. The scene and
/// mask are typically the test-area crops.
pub fn run_grid(
    root: &Path,
    combinations: &[CombinationId],
    raster: &MultibandRaster,
    truth: &MaskRaster,
    opts: &PredictOptions,
) -> Result<GridReport> {
    if truth.values.dim() != (raster.height(), raster.width()) {
        return Err(Error::Evaluation(format!(
            "truth mask {:?} does not match raster {:?}",
            truth.values.dim(),
            (raster.height(), raster.width())
        )));
    }
    let mut results = Vec::with_capacity(combinations.len());
    for &combo in combinations {
        let outcome = final_checkpoint_path(&combo.dir(root))
            .and_then(|p| load_checkpoint(&p))
            .and_then(|ckpt| predict_scene(ckpt, raster, opts))
            .and_then(|pred| evaluate_prediction(&pred, truth))
            .map_err(|e| e.to_string());
        results.push((combo, outcome));
    }
    Ok(GridReport::from_results(results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{EncoderSpec, ModelSpec};
    use crate::raster::GeoTransform;
    use proptest::prelude::*;

    fn rowcol_space() -> GeoTransform {
        GeoTransform {
            origin_x: 0.0,
            origin_y: 0.0,
            pixel_width: 1.0,
            pixel_height: -1.0,
        }
    }

    fn all_valid(h: usize, w: usize) -> Array2<bool> {
        Array2::from_elem((h, w), true)
    }

    #[test]
    fn threshold_is_strict() {
        let probs = ndarray::array![[0.5f32, 0.500001], [0.499999, 1.0]];
        let pred = PredictionRaster::from_probabilities(
            probs,
            all_valid(2, 2),
            0.5,
            Provenance::default(),
        )
        .unwrap();
        assert_eq!(pred.binary, ndarray::array![[0u8, 1], [0, 1]]);
    }

    #[test]
    fn checkerboard_probabilities_give_checkerboard_binary() {
        let probs = Array2::from_shape_fn((8, 8), |(r, c)| if (r + c) % 2 == 0 { 0.6f32 } else { 0.4 });
        let pred = PredictionRaster::from_probabilities(
            probs,
            all_valid(8, 8),
            0.5,
            Provenance::default(),
        )
        .unwrap();
        for ((r, c), &b) in pred.binary.indexed_iter() {
            assert_eq!(b, ((r + c) % 2 == 0) as u8);
        }

        let zeros = Array2::<f32>::zeros((8, 8));
        let empty = PredictionRaster::from_probabilities(
            zeros,
            all_valid(8, 8),
            0.5,
            Provenance::default(),
        )
        .unwrap();
        assert_eq!(empty.positive_count(), 0);
    }

    #[test]
    fn invalid_pixels_are_forced_to_zero_probability() {
        let probs = Array2::from_elem((4, 4), 0.9f32);
        let mut valid = all_valid(4, 4);
        valid[[1, 2]] = false;
        let pred =
            PredictionRaster::from_probabilities(probs, valid, 0.5, Provenance::default()).unwrap();
        assert_eq!(pred.probabilities[[1, 2]], 0.0);
        assert_eq!(pred.binary[[1, 2]], 0);
        assert_eq!(pred.positive_count(), 15);

        assert!(PredictionRaster::from_probabilities(
            Array2::zeros((2, 2)),
            all_valid(2, 2),
            1.0,
            Provenance::default()
        )
        .is_err());
    }

    #[test]
    fn perfect_prediction_scores_one_on_both_ratios() {
        let truth = Array2::from_shape_fn((16, 16), |(r, c)| ((r / 4 + c / 4) % 2 == 0) as u8);
        let report = confusion(&truth.clone(), &truth, &all_valid(16, 16), Provenance::default())
            .unwrap();
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 1.0);
        assert!(report.precision_defined && report.recall_defined);
        assert_eq!(report.false_positives + report.false_negatives, 0);
        assert_eq!(report.evaluated, 256);
    }

    #[test]
    fn hand_counted_confusion_matches() {
        // 3 TP, 1 FP, 1 FN, 3 TN laid out explicitly.
        let pred = ndarray::array![[1u8, 1, 1, 1], [0, 0, 0, 0]];
        let truth = ndarray::array![[1u8, 1, 1, 0], [1, 0, 0, 0]];
        let report = confusion(&pred, &truth, &all_valid(2, 4), Provenance::default()).unwrap();
        assert_eq!(report.true_positives, 3);
        assert_eq!(report.false_positives, 1);
        assert_eq!(report.false_negatives, 1);
        assert_eq!(report.true_negatives, 3);
        assert_eq!(report.precision, 0.75);
        assert_eq!(report.recall, 0.75);

        assert_eq!(report.outcome_map[[0, 0]], OUTCOME_TP);
        assert_eq!(report.outcome_map[[0, 3]], OUTCOME_FP);
        assert_eq!(report.outcome_map[[1, 0]], OUTCOME_FN);
        assert_eq!(report.outcome_map[[1, 1]], OUTCOME_TN);
    }

    #[test]
    fn undefined_ratios_come_back_flagged() {
        // Prediction and truth both empty: no positives anywhere.
        let zeros = Array2::<u8>::zeros((4, 4));
        let report = confusion(&zeros, &zeros, &all_valid(4, 4), Provenance::default()).unwrap();
        assert_eq!(report.precision, 0.0);
        assert_eq!(report.recall, 0.0);
        assert!(!report.precision_defined);
        assert!(!report.recall_defined);
        assert_eq!(report.true_negatives, 16);

        let mismatched = Array2::<u8>::zeros((4, 5));
        assert!(confusion(&zeros, &mismatched, &all_valid(4, 4), Provenance::default()).is_err());
    }

    #[test]
    fn confusion_matches_brute_force_on_seeded_grids() {
        let mut rng = crate::util::seeded_rng(404, "confusion-oracle");
        use rand::Rng;
        for _ in 0..4 {
            let pred = Array2::from_shape_fn((64, 64), |_| rng.gen_range(0..=1u8));
            let truth = Array2::from_shape_fn((64, 64), |_| rng.gen_range(0..=1u8));
            let valid = Array2::from_shape_fn((64, 64), |_| rng.gen_bool(0.9));
            let report = confusion(&pred, &truth, &valid, Provenance::default()).unwrap();

            let (mut tp, mut fp, mut fn_, mut tn, mut n) = (0u64, 0u64, 0u64, 0u64, 0u64);
            for r in 0..64 {
                for c in 0..64 {
                    if !valid[[r, c]] {
                        assert_eq!(report.outcome_map[[r, c]], OUTCOME_VOID);
                        continue;
                    }
                    n += 1;
                    match (pred[[r, c] ] != 0, truth[[r, c]] != 0) {
                        (true, true) => tp += 1,
                        (true, false) => fp += 1,
                        (false, true) => fn_ += 1,
                        (false, false) => tn += 1,
                    }
                }
            }
            assert_eq!(
                (report.true_positives, report.false_positives, report.false_negatives,
                 report.true_negatives, report.evaluated),
                (tp, fp, fn_, tn, n)
            );
        }
    }

    #[test]
    fn scene_prediction_stitches_probabilities_and_masks_nodata() {
        let mut raster = crate::raster::testutil::random_raster(64, 64, 31);
        for r in 0..10 {
            for c in 0..6 {
                raster.nodata[[r, c]] = true;
            }
        }
        let mut net = Network::<f32>::build(
            ModelSpec::segmentation(Architecture::Unet, EncoderSpec::tiny(4)).unwrap(),
            9,
        )
        .unwrap();
        let opts = PredictOptions::new(32, PadMode::ZeroPad);
        let pred =
            predict_scene_with(&mut net, Provenance::default(), &raster, &opts).unwrap();

        assert_eq!(pred.probabilities.dim(), (64, 64));
        assert!(pred
            .probabilities
            .iter()
            .all(|&p| (0.0..=1.0).contains(&p)));
        for r in 0..10 {
            for c in 0..6 {
                assert!(!pred.valid[[r, c]]);
                assert_eq!(pred.probabilities[[r, c]], 0.0);
            }
        }
        assert!(pred.valid[[20, 20]]);
        // Binary agrees with the strict rule everywhere.
        for (p, b) in pred.probabilities.iter().zip(pred.binary.iter()) {
            assert_eq!(*b, (*p > 0.5) as u8);
        }

        // Band mismatch is rejected.
        let slim = crate::raster::testutil::random_raster(32, 32, 5);
        let mut slim3 = slim.clone();
        slim3.data = slim3.data.slice(s![..3, .., ..]).to_owned();
        slim3.band_names.truncate(3);
        assert!(predict_scene_with(&mut net, Provenance::default(), &slim3, &opts).is_err());
    }

    #[test]
    fn prediction_roundtrips_through_a_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let raster = crate::raster::testutil::random_raster(32, 32, 77);
        let spec = ModelSpec::segmentation(Architecture::Linknet, EncoderSpec::tiny(4)).unwrap();
        let mut net = Network::<f32>::build(spec.clone(), 21).unwrap();
        let opts = PredictOptions::new(32, PadMode::ZeroPad);
        let direct =
            predict_scene_with(&mut net, Provenance::default(), &raster, &opts).unwrap();

        let path = dir.path().join("epoch_1.ckpt");
        crate::models::save_checkpoint(
            &path,
            &Checkpoint {
                spec,
                seed: 21,
                provenance: Provenance {
                    framework: Some("standard".into()),
                    ..Default::default()
                },
                store: net.store.clone(),
            },
        )
        .unwrap();
        let from_ckpt = predict_scene(load_checkpoint(&path).unwrap(), &raster, &opts).unwrap();
        assert_eq!(from_ckpt.probabilities, direct.probabilities);
        assert_eq!(from_ckpt.provenance.framework.as_deref(), Some("standard"));
    }

    #[test]
    fn outcome_map_renders_and_recounts() {
        let pred = ndarray::array![[1u8, 1], [0, 0]];
        let truth = ndarray::array![[1u8, 0], [1, 0]];
        let mut valid = all_valid(2, 2);
        valid[[1, 1]] = false;
        let report = confusion(&pred, &truth, &valid, Provenance::default()).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("outcome.rgrid");
        render_outcome_map(&report, rowcol_space(), "EPSG:32722", &path).unwrap();

        let img = crate::raster::load_raster(&path, None).unwrap();
        assert_eq!(img.band_count(), 3);
        let color_at = |r: usize, c: usize| {
            [img.data[[0, r, c]], img.data[[1, r, c]], img.data[[2, r, c]]]
        };
        let lookup = |code: u8| OUTCOME_COLORS.iter().find(|(k, _)| *k == code).unwrap().1;
        assert_eq!(color_at(0, 0), lookup(OUTCOME_TP));
        assert_eq!(color_at(0, 1), lookup(OUTCOME_FP));
        assert_eq!(color_at(1, 0), lookup(OUTCOME_FN));
        assert!(img.nodata[[1, 1]]);

        let legend_raw =
            std::fs::read_to_string(dir.path().join("outcome.rgrid.legend.json")).unwrap();
        let legend: Vec<serde_json::Value> = serde_json::from_str(&legend_raw).unwrap();
        assert_eq!(legend.len(), 4);
        let tp_entry = legend
            .iter()
            .find(|e| e["class"] == "true_positive")
            .unwrap();
        assert_eq!(tp_entry["pixels"], 1);
    }

    #[test]
    fn full_grid_enumerates_42_sorted_rows() {
        let grid = full_grid();
        assert_eq!(grid.len(), 42);
        let mut sorted = grid.clone();
        sorted.sort();
        assert_eq!(grid, sorted);
        assert_eq!(grid.iter().filter(|c| c.framework == Framework::Standard).count(), 6);
        assert_eq!(grid.iter().filter(|c| c.framework == Framework::Proposed).count(), 36);
        // Unique rows.
        let mut dedup = grid.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 42);
    }

    #[test]
    fn grid_report_sorts_rows_and_flags_per_architecture_maxima() {
        let combo = |framework, architecture, k, variant| CombinationId {
            framework,
            architecture,
            k,
            variant,
        };
        let fake = |tp: u64, fp: u64, fn_: u64| {
            let precision_defined = tp + fp > 0;
            let recall_defined = tp + fn_ > 0;
            EvalReport {
                true_positives: tp,
                false_positives: fp,
                false_negatives: fn_,
                true_negatives: 0,
                evaluated: tp + fp + fn_,
                precision: if precision_defined { tp as f64 / (tp + fp) as f64 } else { 0.0 },
                recall: if recall_defined { tp as f64 / (tp + fn_) as f64 } else { 0.0 },
                precision_defined,
                recall_defined,
                outcome_map: Array2::zeros((1, 1)),
                provenance: Provenance::default(),
            }
        };

        let unet_std = combo(Framework::Standard, Architecture::Unet, None, DatasetVariant::Ld30);
        let unet_k2 = combo(Framework::Proposed, Architecture::Unet, Some(2), DatasetVariant::Ld30);
        let fpn_std = combo(Framework::Standard, Architecture::Fpn, None, DatasetVariant::Ld50);
        let report = GridReport::from_results(vec![
            (unet_k2, Ok(fake(9, 1, 1))),
            (fpn_std, Err("missing checkpoint".into())),
            (unet_std, Ok(fake(5, 5, 0))),
        ]);

        // Sorted by (framework, arch, k, dataset): standard rows first.
        assert_eq!(report.rows[0].combination, fpn_std);
        assert_eq!(report.rows[1].combination, unet_std);
        assert_eq!(report.rows[2].combination, unet_k2);

        // Failed row carries no flags; unet bests split across the two rows.
        assert!(report.rows[0].failed.is_some());
        assert!(!report.rows[0].best_precision);
        let k2 = &report.rows[2];
        assert!(k2.best_precision);
        assert!(!k2.best_recall);
        let std_row = &report.rows[1];
        assert!(std_row.best_recall);
        assert!(!std_row.best_precision);

        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "framework,arch,k,dataset,tp,fp,fn,precision,recall,flags");
        assert!(lines[1].starts_with("standard,fpn,na,LD50,"));
        assert!(lines[1].ends_with("failed"));
        assert!(lines[3].contains("proposed,unet,2,LD30,9,1,1,0.900000,0.900000"));
    }

    #[test]
    fn run_grid_marks_missing_checkpoints_and_scores_real_ones() {
        let dir = tempfile::tempdir().unwrap();
        let raster = crate::raster::testutil::random_raster(32, 32, 3);
        let truth = MaskRaster {
            values: Array2::from_shape_fn((32, 32), |(r, _)| (r < 8) as u8),
            transform: raster.transform,
            crs: raster.crs.clone(),
        };

        let trained = CombinationId {
            framework: Framework::Standard,
            architecture: Architecture::Unet,
            k: None,
            variant: DatasetVariant::Ld30,
        };
        let missing = CombinationId {
            framework: Framework::Proposed,
            architecture: Architecture::Unet,
            k: Some(2),
            variant: DatasetVariant::Ld30,
        };
        let spec = ModelSpec::segmentation(Architecture::Unet, EncoderSpec::tiny(4)).unwrap();
        let net = Network::<f32>::build(spec.clone(), 2).unwrap();
        crate::models::save_checkpoint(
            &trained.dir(dir.path()).join("epoch_50.ckpt"),
            &Checkpoint {
                spec,
                seed: 2,
                provenance: Provenance::default(),
                store: net.store.clone(),
            },
        )
        .unwrap();

        let opts = PredictOptions::new(32, PadMode::ZeroPad);
        let report =
            run_grid(dir.path(), &[trained, missing], &raster, &truth, &opts).unwrap();
        assert_eq!(report.rows.len(), 2);
        let ok_row = report.rows.iter().find(|r| r.combination == trained).unwrap();
        assert!(ok_row.failed.is_none());
        assert_eq!(
            ok_row.true_positives + ok_row.false_negatives,
            truth.values.iter().map(|&v| v as u64).sum::<u64>()
        );
        let missing_row = report.rows.iter().find(|r| r.combination == missing).unwrap();
        assert!(missing_row.failed.is_some());

        // The single successful row matches a standalone evaluation.
        let pred = predict_scene(
            load_checkpoint(&final_checkpoint_path(&trained.dir(dir.path())).unwrap()).unwrap(),
            &raster,
            &opts,
        )
        .unwrap();
        let standalone = evaluate_prediction(&pred, &truth).unwrap();
        assert_eq!(ok_row.true_positives, standalone.true_positives);
        assert_eq!(ok_row.precision, standalone.precision);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Raising the threshold can only shrink the positive set, so FP and
        /// TP are both non-increasing in the threshold.
        #[test]
        fn threshold_monotonicity(
            seed in 0u64..1000,
            t1 in 0.05f32..0.95,
            dt in 0.0f32..0.5,
        ) {
            let t2 = (t1 + dt).min(0.99);
            let mut rng = crate::util::seeded_rng(seed, "threshold-prop");
            use rand::Rng;
            let probs = Array2::from_shape_fn((24, 24), |_| rng.gen_range(0.0f32..1.0));
            let truth = Array2::from_shape_fn((24, 24), |_| rng.gen_range(0..=1u8));
            let valid = Array2::from_shape_fn((24, 24), |_| rng.gen_bool(0.95));

            let lo = PredictionRaster::from_probabilities(
                probs.clone(), valid.clone(), t1, Provenance::default()).unwrap();
            let hi = PredictionRaster::from_probabilities(
                probs, valid.clone(), t2, Provenance::default()).unwrap();

            // Set inclusion: every positive at the higher threshold is
            // positive at the lower one.
            for (a, b) in hi.binary.iter().zip(lo.binary.iter()) {
                prop_assert!(*a <= *b);
            }

            let rep_lo = confusion(&lo.binary, &truth, &valid, Provenance::default()).unwrap();
            let rep_hi = confusion(&hi.binary, &truth, &valid, Provenance::default()).unwrap();
            prop_assert!(rep_hi.false_positives <= rep_lo.false_positives);
            prop_assert!(rep_hi.true_positives <= rep_lo.true_positives);
        }
    }
}
