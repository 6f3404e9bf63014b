//! Training commands: standalone cluster-classifier pre-training per k, and
//! single-combination segmenter training that reuses those artifacts.

use serde_json::json;

use relict_core::datasets::{load_cluster_dataset, load_labeled_dataset};
use relict_core::evaluation::CombinationId;
use relict_core::models::{
    load_checkpoint, transfer_encoder, Architecture, Framework, ModelSpec, Network, Provenance,
};
use relict_core::training::{pretrain as run_pretrain, train_segmenter, CheckpointPlan};

use crate::commands::{final_checkpoint_in, print_summary};
use crate::config::PipelineConfig;
use crate::{missing_if_not_found, CliError, CliResult};

pub fn pretrain(config: &PipelineConfig, only_k: Option<u32>) -> CliResult<()> {
    let ks: Vec<usize> = match only_k {
        Some(k) => {
            let k = k as usize;
            if !config.dataset.k.contains(&k) {
                return Err(CliError::Config(format!(
                    "k={k} is not in the configured sweep {:?}",
                    config.dataset.k
                )));
            }
            vec![k]
        }
        None => config.dataset.k.clone(),
    };
    let hash = config.config_hash();
    let mut runs = Vec::new();
    for k in ks {
        let dataset = missing_if_not_found(
            load_cluster_dataset(&config.cluster_dataset_dir(k)),
            &format!("cluster dataset for k={k}"),
            "prepare-cluster",
        )?;
        let bands = dataset
            .tiles
            .first()
            .map(|t| t.pixels.dim().0)
            .ok_or_else(|| {
                CliError::Runtime(relict_core::Error::Dataset(format!(
                    "cluster dataset for k={k} is empty"
                )))
            })?;
        let spec = ModelSpec::classifier(config.model.encoder(bands), k)?;
        let train_config = config.pretrain_config_for(k);
        let mut network = Network::build(spec, train_config.seed)?;
        let plan = CheckpointPlan {
            dir: config.pretrain_dir(k),
            every: 25,
            provenance: Provenance {
                framework: Some(Framework::Proposed.as_str().into()),
                architecture: Some(Architecture::Classifier.as_str().into()),
                k: Some(k as u32),
                dataset: None,
                epoch: None,
                config_hash: Some(hash.clone()),
            },
        };
        let record = run_pretrain(&mut network, &dataset, &train_config, Some(&plan))?;
        runs.push(json!({
            "k": k,
            "epochs": record.epochs.len(),
            "final_loss": record.final_loss(),
            "final_accuracy": record.final_accuracy(),
            "encoder_checksum": record.final_encoder_checksum,
            "dir": plan.dir.display().to_string(),
        }));
    }
    print_summary(json!({
        "command": "pretrain",
        "config_hash": hash,
        "runs": runs,
    }));
    Ok(())
}

/// Reject selector combinations before any work: the pairing rules are the
/// same ones the core runner enforces, surfaced as config errors.
fn check_combination(config: &PipelineConfig, combo: &CombinationId) -> CliResult<()> {
    if combo.architecture == Architecture::Classifier {
        return Err(CliError::Config(
            "train drives segmentation architectures; the classifier is pre-training only".into(),
        ));
    }
    match (combo.framework, combo.k) {
        (Framework::Proposed, None) => Err(CliError::Config(
            "the proposed framework needs --k".into(),
        )),
        (Framework::Standard, Some(_)) => Err(CliError::Config(
            "the standard framework takes no --k".into(),
        )),
        (Framework::Proposed, Some(k)) if !config.dataset.k.contains(&(k as usize)) => {
            Err(CliError::Config(format!(
                "k={k} is not in the configured sweep {:?}",
                config.dataset.k
            )))
        }
        _ => Ok(()),
    }
}

pub fn train(config: &PipelineConfig, combo: &CombinationId) -> CliResult<()> {
    check_combination(config, combo)?;
    let dataset = missing_if_not_found(
        load_labeled_dataset(&config.variant_dir(combo.variant)),
        &format!("{} dataset", combo.variant),
        "augment",
    )?;
    let bands = dataset
        .tiles
        .first()
        .map(|t| t.pixels.dim().0)
        .ok_or_else(|| {
            CliError::Runtime(relict_core::Error::Dataset(format!(
                "{} dataset is empty",
                combo.variant
            )))
        })?;

    let spec = ModelSpec::segmentation(combo.architecture, config.model.encoder(bands))?;
    let mut network = Network::build(spec, config.finetune.seed)?;
    let mut encoder_source = None;
    if combo.framework == Framework::Proposed {
        let k = combo.k.expect("checked above") as usize;
        let path = final_checkpoint_in(
            &config.pretrain_dir(k),
            &format!("pre-trained encoder for k={k}"),
            "pretrain",
        )?;
        let checkpoint = load_checkpoint(&path)?;
        transfer_encoder(&checkpoint.store, &mut network)?;
        encoder_source = Some(path.display().to_string());
    }

    let hash = config.config_hash();
    let dir = combo.dir(&config.models_root());
    let plan = CheckpointPlan {
        dir: dir.clone(),
        every: 25,
        provenance: Provenance {
            framework: Some(combo.framework.as_str().into()),
            architecture: Some(combo.architecture.as_str().into()),
            k: combo.k,
            dataset: Some(combo.variant.as_str().into()),
            epoch: None,
            config_hash: Some(hash.clone()),
        },
    };
    let record = train_segmenter(&mut network, &dataset, &config.finetune, Some(&plan))?;
    print_summary(json!({
        "command": "train",
        "config_hash": hash,
        "combination": combo.to_string(),
        "epochs": record.epochs.len(),
        "final_loss": record.final_loss(),
        "final_accuracy": record.final_accuracy(),
        "encoder_source": encoder_source,
        "dir": dir.display().to_string(),
    }));
    Ok(())
}
