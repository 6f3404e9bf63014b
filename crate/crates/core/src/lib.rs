//! Relict landslide detection on multispectral imagery.
//!
//! The crate covers the full pipeline: raster and vector I/O, tile extraction,
//! k-means pre-training of a convolutional encoder, U-Net / FPN / LinkNet
//! segmentation heads, training loops, and pixel-level evaluation. Everything
//! runs on the CPU and is deterministic for a fixed seed: rerunning a step with
//! the same inputs and configuration reproduces its artifacts bit for bit.

pub mod clustering;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod nn;
pub mod raster;
pub mod synthetic;
pub mod training;
pub mod util;

pub use error::{Error, Result};
pub use evaluation::{
    confusion, predict_scene, run_grid, CombinationId, EvalReport, GridReport, PredictOptions,
    PredictionRaster,
};
pub use models::{
    transfer_encoder, Architecture, Checkpoint, EncoderSpec, Framework, ModelSpec, Network,
    Provenance, WidthScale,
};
pub use nn::ParameterStore;
pub use training::{
    pretrain, run_framework, train_segmenter, DatasetVariant, Device, TrainConfig, TrainRecord,
};
pub use raster::{
    load_raster, save_raster, GeoTransform, MaskRaster, MultibandRaster, PadMode, TileGrid,
};
pub use synthetic::{generate_scene, SceneSpec};
