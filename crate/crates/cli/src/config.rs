//! Pipeline configuration: one declarative TOML document drives every
//! command. Flags only select work within it; the SHA-256 of the canonical
//! serialization is stamped into artifacts so outputs are auditable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use relict_core::models::{Architecture, EncoderSpec, Framework};
use relict_core::raster::PadMode;
use relict_core::synthetic::SceneSpec;
use relict_core::training::{DatasetVariant, LossKind, TrainConfig, CLUSTER_COUNTS};
use relict_core::util;

use crate::{CliError, CliResult};

/// One input scene: a multiband raster plus exactly one truth source, either
/// a landslide polygon file or a prerasterized mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub name: String,
    pub raster: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygons: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
}

fn default_shard_records() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub tile_size: usize,
    pub pad_mode: PadMode,
    pub split_ratio: f64,
    /// Cluster counts to sweep.
    pub k: Vec<usize>,
    pub ld30_factor: usize,
    pub ld50_factor: usize,
    #[serde(default)]
    pub kmeans_standardize: bool,
    pub kmeans_seed: u64,
    pub balance_seed: u64,
    pub augment_seed: u64,
    #[serde(default = "default_shard_records")]
    pub shard_records: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Tiny,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Preset,
}

impl ModelSection {
    pub fn encoder(&self, bands: usize) -> EncoderSpec {
        match self.preset {
            Preset::Tiny => EncoderSpec::tiny(bands),
            Preset::Full => EncoderSpec::full(bands),
        }
    }
}

fn default_eval_batch() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub threshold: f32,
    #[serde(default = "default_eval_batch")]
    pub batch_size: usize,
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub frameworks: Vec<Framework>,
    pub architectures: Vec<Architecture>,
    pub variants: Vec<DatasetVariant>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_root: PathBuf,
    pub scenes: Vec<SceneConfig>,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub evaluation: EvaluationSection,
    pub grid: GridSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SceneSpec>,
}

impl PipelineConfig {
    /// Parse, resolve paths against the config file's directory, honor the
    /// `RELICT_OUTPUT_ROOT` override, and validate.
    pub fn load(path: &Path, allow_any_k: bool) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        if let Ok(root) = std::env::var("RELICT_OUTPUT_ROOT") {
            config.output_root = PathBuf::from(root);
        }
        config.validate(allow_any_k)?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.output_root);
        for scene in &mut self.scenes {
            resolve(&mut scene.raster);
            if let Some(p) = &mut scene.polygons {
                resolve(p);
            }
            if let Some(p) = &mut scene.mask {
                resolve(p);
            }
        }
    }

    pub fn validate(&self, allow_any_k: bool) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.scenes.is_empty() {
            return bad("at least one [[scenes]] entry is required".into());
        }
        let mut names: Vec<&str> = self.scenes.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.scenes.len() {
            return bad("scene names must be unique".into());
        }
        for scene in &self.scenes {
            match (&scene.polygons, &scene.mask) {
                (Some(_), Some(_)) => {
                    return bad(format!(
                        "scene `{}` sets both polygons and mask; pick one truth source",
                        scene.name
                    ))
                }
                (None, None) => {
                    return bad(format!(
                        "scene `{}` needs a truth source: polygons or mask",
                        scene.name
                    ))
                }
                _ => {}
            }
        }
        if self.dataset.tile_size == 0 || self.dataset.tile_size % 32 != 0 {
            return bad(format!(
                "tile_size must be a positive multiple of 32 (encoder stride), got {}",
                self.dataset.tile_size
            ));
        }
        if !(self.dataset.split_ratio > 0.0 && self.dataset.split_ratio < 1.0) {
            return bad(format!(
                "split_ratio must lie in (0,1), got {}",
                self.dataset.split_ratio
            ));
        }
        for &k in &self.dataset.k {
            if k < 2 {
                return bad(format!("cluster count k must be at least 2, got {k}"));
            }
            if !allow_any_k && !CLUSTER_COUNTS.contains(&(k as u32)) {
                return bad(format!(
                    "k={k} is outside the published sweep {CLUSTER_COUNTS:?}; pass --allow-any-k to override"
                ));
            }
        }
        if self.dataset.ld30_factor < 1 || self.dataset.ld50_factor < 1 {
            return bad("augmentation factors must be at least 1".into());
        }
        if self.dataset.shard_records < 1 {
            return bad("shard_records must be at least 1".into());
        }
        if self.pretrain.loss != LossKind::CategoricalCe {
            return bad("[pretrain] must use loss = \"categorical-ce\"".into());
        }
        if self.finetune.loss != LossKind::PixelBce {
            return bad("[finetune] must use loss = \"pixel-bce\"".into());
        }
        self.pretrain
            .validate()
            .map_err(|e| CliError::Config(format!("[pretrain] {e}")))?;
        self.finetune
            .validate()
            .map_err(|e| CliError::Config(format!("[finetune] {e}")))?;
        if !(self.evaluation.threshold > 0.0 && self.evaluation.threshold < 1.0) {
            return bad(format!(
                "threshold must lie in (0,1), got {}",
                self.evaluation.threshold
            ));
        }
        if self.evaluation.batch_size < 1 {
            return bad("evaluation batch_size must be at least 1".into());
        }
        if self.grid.frameworks.is_empty()
            || self.grid.architectures.is_empty()
            || self.grid.variants.is_empty()
        {
            return bad("[grid] frameworks, architectures and variants must be non-empty".into());
        }
        if self.grid.architectures.contains(&Architecture::Classifier) {
            return bad("[grid] architectures must be segmentation models".into());
        }
        if self.grid.workers < 1 {
            return bad("[grid] workers must be at least 1".into());
        }
        if self.grid.frameworks.contains(&Framework::Proposed) && self.dataset.k.is_empty() {
            return bad("proposed framework runs need a non-empty dataset.k list".into());
        }
        if let Some(spec) = &self.synthetic {
            spec.validate()
                .map_err(|e| CliError::Config(format!("[synthetic] {e}")))?;
            for scene in &self.scenes {
                if scene.mask.is_none() {
                    return bad(format!(
                        "scene `{}` uses polygons; synthetic scenes need mask paths",
                        scene.name
                    ));
                }
            }
        }
        Ok(())
    }

    /// Canonical serialization: parsing it back and re-serializing is the
    /// identity, so its hash names this configuration.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn config_hash(&self) -> String {
        util::sha256_hex(self.canonical_toml().as_bytes())
    }

    pub fn scene(&self, name: &str) -> CliResult<&SceneConfig> {
        self.scenes
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| CliError::Config(format!("no scene named `{name}` in the config")))
    }

    pub fn augment_factor(&self, variant: DatasetVariant) -> usize {
        match variant {
            DatasetVariant::Ld30 => self.dataset.ld30_factor,
            DatasetVariant::Ld50 => self.dataset.ld50_factor,
        }
    }

    /// TrainConfig for one pre-training run; the k-specific seed stream keeps
    /// cluster sweeps independent.
    pub fn pretrain_config_for(&self, k: usize) -> TrainConfig {
        let mut c = self.pretrain.clone();
        c.seed = c.seed.wrapping_add(k as u64);
        c
    }

    // Artifact locations under the output root. Commands and tests agree on
    // these through this single set of accessors.

    pub fn split_path(&self, scene: &str) -> PathBuf {
        self.output_root.join("splits").join(format!("{scene}.json"))
    }

    pub fn labeled_dir(&self) -> PathBuf {
        self.output_root.join("datasets").join("labeled")
    }

    pub fn variant_dir(&self, variant: DatasetVariant) -> PathBuf {
        self.output_root.join("datasets").join(variant.as_str())
    }

    pub fn cluster_model_path(&self, k: usize) -> PathBuf {
        self.output_root
            .join("clusters")
            .join(format!("k{k}"))
            .join("model.json")
    }

    pub fn cluster_dataset_dir(&self, k: usize) -> PathBuf {
        self.output_root
            .join("datasets")
            .join("cluster")
            .join(format!("k{k}"))
    }

    pub fn pretrain_dir(&self, k: usize) -> PathBuf {
        self.output_root
            .join("models")
            .join("pretrain")
            .join(format!("k{k}"))
    }

    pub fn models_root(&self) -> PathBuf {
        self.output_root.join("models")
    }

    pub fn predictions_root(&self) -> PathBuf {
        self.output_root.join("predictions")
    }

    pub fn evaluation_root(&self) -> PathBuf {
        self.output_root.join("evaluation")
    }

    pub fn grid_dir(&self) -> PathBuf {
        self.output_root.join("grid")
    }
}
