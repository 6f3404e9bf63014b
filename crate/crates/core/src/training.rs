//! The two optimization loops: cluster pre-training of the classifier and
//! fine-tuning of segmentation models, plus the framework runner that
//! composes them.
//!
//! Batch order is drawn from a seeded stream per epoch, so a fixed config on
//! the CPU backend reproduces the loss trajectory and the final parameter
//! bits exactly. Checkpoints land in
//! `<framework>/<arch>/k<k|na>/<LD30|LD50>/epoch_<n>.ckpt` with a
//! `train_record.json` alongside.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array4};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::{ClusterDataset, ClusterTile, LabeledDataset, LabeledTile};
use crate::error::{Error, Result};
use crate::models::{
    save_checkpoint, transfer_encoder, Architecture, Checkpoint, EncoderSpec, Framework,
    ModelSpec, Network, Provenance,
};
use crate::nn::{Adam, Mode, Optimizer, Sgd};
use crate::raster::SplitSide;

/// Cluster counts the pre-training sweep covers.
pub const CLUSTER_COUNTS: [u32; 6] = [2, 4, 6, 8, 10, 12];

/// Parameter prefix shared by the classifier and the segmenters; the tensors
/// under it are what pre-training transfers.
pub const ENCODER_PREFIX: &str = "encoder.";

/// Where training math runs. Only the CPU backend exists; the variant for
/// accelerator offload is accepted in configs and rejected at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Cpu,
    Accelerator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    AdaptiveMoment,
    PlainSgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    PixelBce,
    CategoricalCe,
}

/// The two labeled-mask variants a segmenter can train against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetVariant {
    #[serde(rename = "LD30")]
    Ld30,
    #[serde(rename = "LD50")]
    Ld50,
}

impl DatasetVariant {
    pub const ALL: [DatasetVariant; 2] = [DatasetVariant::Ld30, DatasetVariant::Ld50];

    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetVariant::Ld30 => "LD30",
            DatasetVariant::Ld50 => "LD50",
        }
    }
}

impl std::fmt::Display for DatasetVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LD30" | "ld30" => Ok(DatasetVariant::Ld30),
            "LD50" | "ld50" => Ok(DatasetVariant::Ld50),
            other => Err(Error::Training(format!("unknown dataset variant `{other}`"))),
        }
    }
}

fn default_learning_rate() -> f64 {
    1e-5
}
fn default_epochs() -> usize {
    300
}
fn default_batch_size() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "TrainConfig::default_optimizer")]
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    #[serde(default = "TrainConfig::default_device")]
    pub device: Device,
}

impl TrainConfig {
    fn default_optimizer() -> OptimizerKind {
        OptimizerKind::AdaptiveMoment
    }
    fn default_device() -> Device {
        Device::Cpu
    }

    /// Defaults for a given loss: lr 1e-5, 300 epochs, batches of 32,
    /// adaptive-moment updates on the CPU.
    pub fn new(loss: LossKind, seed: u64) -> Self {
        Self {
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            seed,
            optimizer: Self::default_optimizer(),
            loss,
            device: Self::default_device(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Training(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs < 1 {
            return Err(Error::Training("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Training("batch size must be at least 1".into()));
        }
        Ok(())
    }

    fn require_device(&self) -> Result<()> {
        match self.device {
            Device::Cpu => Ok(()),
            Device::Accelerator => Err(Error::UnsupportedDevice(self.device)),
        }
    }

    fn make_optimizer(&self) -> Box<dyn Optimizer<f32>> {
        let lr = self.learning_rate as f32;
        match self.optimizer {
            OptimizerKind::AdaptiveMoment => Box::new(Adam::new(lr)),
            OptimizerKind::PlainSgd => Box::new(Sgd { lr }),
        }
    }
}

/// Where and how often to write checkpoints. Separate from [`TrainConfig`]
/// so in-memory training (tests, sweeps) skips the filesystem entirely.
#[derive(Debug, Clone)]
pub struct CheckpointPlan {
    pub dir: PathBuf,
    /// Save every this many epochs; the final epoch is always saved.
    pub every: usize,
    pub provenance: Provenance,
}

impl CheckpointPlan {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            every: 25,
            provenance: Provenance::default(),
        }
    }

    fn wants_epoch(&self, epoch: usize, total: usize) -> bool {
        epoch == total || (self.every > 0 && epoch % self.every == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Tile accuracy for the classifier, pixel accuracy for segmenters.
    pub accuracy: f64,
    pub wall_ms: u64,
}

/// Trajectory of one training run. Two runs with identical config and data
/// on the CPU match everywhere except the wall-clock fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epochs: Vec<EpochStats>,
    pub total_wall_ms: u64,
    pub initial_checksum: String,
    pub final_checksum: String,
    pub initial_encoder_checksum: String,
    pub final_encoder_checksum: String,
}

impl TrainRecord {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.accuracy)
    }

    /// True when the two runs took the same numerical path: every per-epoch
    /// loss and accuracy equal and all checksums equal. Wall times excluded.
    pub fn same_trajectory(&self, other: &TrainRecord) -> bool {
        self.epochs.len() == other.epochs.len()
            && self
                .epochs
                .iter()
                .zip(&other.epochs)
                .all(|(a, b)| a.epoch == b.epoch && a.loss == b.loss && a.accuracy == b.accuracy)
            && self.initial_checksum == other.initial_checksum
            && self.final_checksum == other.final_checksum
            && self.initial_encoder_checksum == other.initial_encoder_checksum
            && self.final_encoder_checksum == other.final_encoder_checksum
    }
}

pub fn save_train_record(path: &Path, record: &TrainRecord) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let json = serde_json::to_vec_pretty(record).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_train_record(path: &Path) -> Result<TrainRecord> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Serde(e.to_string()))
}

/// Sample indices shuffled for one epoch, then chunked. The stream is keyed
/// by the loop label and epoch number so the two loops never share draws.
fn epoch_batches(n: usize, batch_size: usize, seed: u64, label: &str, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = crate::util::seeded_rng(seed, &format!("{label}-epoch-{epoch}"));
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

fn cluster_batch(tiles: &[&ClusterTile], idx: &[usize]) -> (Array4<f32>, Vec<usize>) {
    let (bands, h, w) = tiles[idx[0]].pixels.dim();
    let mut x = Array4::zeros((idx.len(), bands, h, w));
    let mut labels = Vec::with_capacity(idx.len());
    for (row, &i) in idx.iter().enumerate() {
        x.slice_mut(s![row, .., .., ..]).assign(&tiles[i].pixels);
        labels.push(tiles[i].cluster_label as usize);
    }
    (x, labels)
}

fn labeled_batch(tiles: &[&LabeledTile], idx: &[usize]) -> (Array4<f32>, Array4<f32>) {
    let (bands, h, w) = tiles[idx[0]].pixels.dim();
    let mut x = Array4::zeros((idx.len(), bands, h, w));
    let mut t = Array4::zeros((idx.len(), 1, h, w));
    for (row, &i) in idx.iter().enumerate() {
        x.slice_mut(s![row, .., .., ..]).assign(&tiles[i].pixels);
        t.slice_mut(s![row, 0, .., ..])
            .assign(&tiles[i].target_mask.mapv(|v| v as f32));
    }
    (x, t)
}

fn maybe_checkpoint(
    plan: Option<&CheckpointPlan>,
    net: &Network<f32>,
    config: &TrainConfig,
    epoch: usize,
) -> Result<()> {
    let Some(plan) = plan else { return Ok(()) };
    if !plan.wants_epoch(epoch, config.epochs) {
        return Ok(());
    }
    let mut provenance = plan.provenance.clone();
    provenance.epoch = Some(epoch as u32);
    let ckpt = Checkpoint {
        spec: net.spec.clone(),
        seed: config.seed,
        provenance,
        store: net.store.clone(),
    };
    save_checkpoint(&plan.dir.join(format!("epoch_{epoch}.ckpt")), &ckpt)
}

/// Pre-train the cluster classifier: categorical cross-entropy over seeded
/// mini-batches. The network is updated in place; the record carries the
/// loss/accuracy trajectory and the parameter checksums.
pub fn pretrain(
    classifier: &mut Network<f32>,
    dataset: &ClusterDataset,
    config: &TrainConfig,
    plan: Option<&CheckpointPlan>,
) -> Result<TrainRecord> {
    config.validate()?;
    config.require_device()?;
    if config.loss != LossKind::CategoricalCe {
        return Err(Error::Training(
            "pre-training requires the categorical-ce loss".into(),
        ));
    }
    if classifier.spec.architecture != Architecture::Classifier {
        return Err(Error::Training(
            "pre-training expects a classifier network".into(),
        ));
    }
    let tiles: Vec<&ClusterTile> = dataset.tiles.iter().collect();
    if tiles.is_empty() {
        return Err(Error::Training("cluster dataset is empty".into()));
    }
    let k = classifier.spec.output_classes;
    if let Some(mk) = dataset.manifest.k {
        if mk != k {
            return Err(Error::Training(format!(
                "classifier has {k} outputs but the dataset was clustered with k={mk}"
            )));
        }
    }
    if let Some(t) = tiles.iter().find(|t| t.cluster_label as usize >= k) {
        return Err(Error::Training(format!(
            "cluster label {} outside [0, {k})",
            t.cluster_label
        )));
    }

    let started = Instant::now();
    let mut optimizer = config.make_optimizer();
    let initial_checksum = classifier.store.checksum();
    let initial_encoder_checksum = classifier.store.checksum_prefix(ENCODER_PREFIX);
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let epoch_started = Instant::now();
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (batch_no, idx) in epoch_batches(tiles.len(), config.batch_size, config.seed, "pretrain", epoch)
            .iter()
            .enumerate()
        {
            let (x, labels) = cluster_batch(&tiles, idx);
            let (loss, grads, logits) = classifier.cls_loss_and_grads(&x, &labels, Mode::Train)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            optimizer.step(&mut classifier.store, &grads);
            loss_sum += loss as f64 * idx.len() as f64;
            for (row, &label) in logits.outer_iter().zip(&labels) {
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap();
                correct += (argmax == label) as usize;
            }
        }
        epochs.push(EpochStats {
            epoch,
            loss: loss_sum / tiles.len() as f64,
            accuracy: correct as f64 / tiles.len() as f64,
            wall_ms: epoch_started.elapsed().as_millis() as u64,
        });
        maybe_checkpoint(plan, classifier, config, epoch)?;
    }

    let record = TrainRecord {
        epochs,
        total_wall_ms: started.elapsed().as_millis() as u64,
        initial_checksum,
        final_checksum: classifier.store.checksum(),
        initial_encoder_checksum,
        final_encoder_checksum: classifier.store.checksum_prefix(ENCODER_PREFIX),
    };
    if let Some(plan) = plan {
        save_train_record(&plan.dir.join("train_record.json"), &record)?;
    }
    Ok(record)
}

/// Fine-tune a segmenter on the train-area tiles: per-pixel binary
/// cross-entropy over seeded mini-batches. Test-area tiles in the dataset are
/// ignored. Negative tiles train the background class through their all-zero
/// masks.
pub fn train_segmenter(
    model: &mut Network<f32>,
    dataset: &LabeledDataset,
    config: &TrainConfig,
    plan: Option<&CheckpointPlan>,
) -> Result<TrainRecord> {
    config.validate()?;
    config.require_device()?;
    if config.loss != LossKind::PixelBce {
        return Err(Error::Training(
            "segmentation training requires the pixel-bce loss".into(),
        ));
    }
    if model.spec.architecture == Architecture::Classifier {
        return Err(Error::Training(
            "segmentation training expects a segmentation network".into(),
        ));
    }
    let tiles: Vec<&LabeledTile> = dataset
        .tiles
        .iter()
        .filter(|t| t.area == SplitSide::Train)
        .collect();
    if tiles.is_empty() {
        return Err(Error::Training(
            "labeled dataset holds no train-area tiles".into(),
        ));
    }

    let started = Instant::now();
    let mut optimizer = config.make_optimizer();
    let initial_checksum = model.store.checksum();
    let initial_encoder_checksum = model.store.checksum_prefix(ENCODER_PREFIX);
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let epoch_started = Instant::now();
        let mut loss_sum = 0.0f64;
        let mut hits = 0u64;
        let mut pixels = 0u64;
        for (batch_no, idx) in epoch_batches(tiles.len(), config.batch_size, config.seed, "segmenter", epoch)
            .iter()
            .enumerate()
        {
            let (x, target) = labeled_batch(&tiles, idx);
            let (loss, grads, logits) = model.seg_loss_and_grads(&x, &target, Mode::Train)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            optimizer.step(&mut model.store, &grads);
            loss_sum += loss as f64 * idx.len() as f64;
            // Logit >= 0 is probability >= 0.5.
            for (&z, &t) in logits.iter().zip(target.iter()) {
                hits += ((z >= 0.0) == (t > 0.5)) as u64;
            }
            pixels += logits.len() as u64;
        }
        epochs.push(EpochStats {
            epoch,
            loss: loss_sum / tiles.len() as f64,
            accuracy: hits as f64 / pixels as f64,
            wall_ms: epoch_started.elapsed().as_millis() as u64,
        });
        maybe_checkpoint(plan, model, config, epoch)?;
    }

    let record = TrainRecord {
        epochs,
        total_wall_ms: started.elapsed().as_millis() as u64,
        initial_checksum,
        final_checksum: model.store.checksum(),
        initial_encoder_checksum,
        final_encoder_checksum: model.store.checksum_prefix(ENCODER_PREFIX),
    };
    if let Some(plan) = plan {
        save_train_record(&plan.dir.join("train_record.json"), &record)?;
    }
    Ok(record)
}

/// One grid combination, ready to run.
pub struct FrameworkRun<'a> {
    pub framework: Framework,
    pub architecture: Architecture,
    /// Cluster count; required by `Proposed`, forbidden by `Standard`.
    pub k: Option<u32>,
    pub variant: DatasetVariant,
    pub encoder: EncoderSpec,
    pub cluster_dataset: Option<&'a ClusterDataset>,
    pub labeled_dataset: &'a LabeledDataset,
    pub pretrain_config: TrainConfig,
    pub train_config: TrainConfig,
    /// Root under which `<framework>/<arch>/k<k|na>/<variant>/` is created.
    /// `None` trains in memory without checkpoints.
    pub output_root: Option<&'a Path>,
    /// Hash of the pipeline config, stamped into checkpoint provenance.
    pub config_hash: Option<String>,
}

pub struct FrameworkOutcome {
    pub network: Network<f32>,
    pub record: TrainRecord,
    /// Present for the proposed framework only.
    pub pretrain_record: Option<TrainRecord>,
    /// Encoder checksum straight out of pre-training; equals the segmenter's
    /// `initial_encoder_checksum` when transfer happened.
    pub pretrained_encoder_checksum: Option<String>,
    /// Checkpoint directory, when an output root was given.
    pub dir: Option<PathBuf>,
}

/// Directory for one combination: `<framework>/<arch>/k<k|na>/<LD30|LD50>`.
pub fn combination_dir(
    root: &Path,
    framework: Framework,
    architecture: Architecture,
    k: Option<u32>,
    variant: DatasetVariant,
) -> PathBuf {
    let kseg = match k {
        Some(k) => format!("k{k}"),
        None => "kna".into(),
    };
    root.join(framework.as_str())
        .join(architecture.as_str())
        .join(kseg)
        .join(variant.as_str())
}

fn validate_combination(run: &FrameworkRun<'_>) -> Result<()> {
    if run.architecture == Architecture::Classifier {
        return Err(Error::Training(
            "the framework runner trains segmentation architectures".into(),
        ));
    }
    match (run.framework, run.k) {
        (Framework::Proposed, Some(k)) if CLUSTER_COUNTS.contains(&k) => Ok(()),
        (Framework::Proposed, Some(k)) => Err(Error::Training(format!(
            "proposed framework needs k in {CLUSTER_COUNTS:?}, got {k}"
        ))),
        (Framework::Proposed, None) => Err(Error::Training(
            "proposed framework needs a cluster count k".into(),
        )),
        (Framework::Standard, None) => Ok(()),
        (Framework::Standard, Some(k)) => Err(Error::Training(format!(
            "standard framework takes no cluster count, got k={k}"
        ))),
    }?;
    match (run.framework, run.cluster_dataset.is_some()) {
        (Framework::Proposed, false) => Err(Error::Training(
            "proposed framework needs a cluster dataset".into(),
        )),
        (Framework::Standard, true) => Err(Error::Training(
            "standard framework takes no cluster dataset".into(),
        )),
        _ => Ok(()),
    }
}

/// Run one combination end to end. `Proposed` pre-trains a classifier on the
/// cluster dataset and transfers its encoder into the segmenter; `Standard`
/// fine-tunes from random initialization. Provenance (framework, arch, k,
/// dataset variant, config hash) is stamped into every checkpoint.
pub fn run_framework(run: FrameworkRun<'_>) -> Result<FrameworkOutcome> {
    validate_combination(&run)?;
    let dir = run.output_root.map(|root| {
        combination_dir(root, run.framework, run.architecture, run.k, run.variant)
    });
    let provenance = Provenance {
        framework: Some(run.framework.as_str().into()),
        architecture: Some(run.architecture.as_str().into()),
        k: run.k,
        dataset: Some(run.variant.as_str().into()),
        epoch: None,
        config_hash: run.config_hash.clone(),
    };

    let mut pretrain_record = None;
    let mut pretrained_encoder_checksum = None;
    let mut pretrained_store = None;
    if run.framework == Framework::Proposed {
        let k = run.k.unwrap() as usize;
        let spec = ModelSpec::classifier(run.encoder.clone(), k)?;
        let mut classifier = Network::build(spec, run.pretrain_config.seed)?;
        let plan = dir.as_ref().map(|d| CheckpointPlan {
            dir: d.join("pretrain"),
            every: 0,
            provenance: Provenance {
                architecture: Some(Architecture::Classifier.as_str().into()),
                ..provenance.clone()
            },
        });
        let record = pretrain(
            &mut classifier,
            run.cluster_dataset.unwrap(),
            &run.pretrain_config,
            plan.as_ref(),
        )?;
        pretrained_encoder_checksum = Some(classifier.store.checksum_prefix(ENCODER_PREFIX));
        pretrain_record = Some(record);
        pretrained_store = Some(classifier.store);
    }

    let spec = ModelSpec::segmentation(run.architecture, run.encoder.clone())?;
    let mut segmenter = Network::build(spec, run.train_config.seed)?;
    if let Some(store) = &pretrained_store {
        transfer_encoder(store, &mut segmenter)?;
    }

    let plan = dir.as_ref().map(|d| CheckpointPlan {
        dir: d.clone(),
        every: 25,
        provenance,
    });
    let record = train_segmenter(&mut segmenter, run.labeled_dataset, &run.train_config, plan.as_ref())?;

    Ok(FrameworkOutcome {
        network: segmenter,
        record,
        pretrain_record,
        pretrained_encoder_checksum,
        dir,
    })
}
