//! The training driver: epochs, shuffling, on-the-fly deformation, and
//! best-weights tracking.
//!
//! All randomness descends from one seed through labeled derivation
//! (initialization, per-epoch shuffles, per-sample deformation draws,
//! per-batch dropout), so a run is reproducible bit for bit. When the
//! deformation policy cannot change anything, features are extracted once
//! up front instead of every epoch; the outputs are identical either way.

use crate::augment::DeformPolicy;
use crate::dataio::{DataError, Dataset};
use crate::net::{ArchSpec, NetError, Network, TrainConfig};
use crate::pipeline::{featurize_sample, featurize_train, FeaturizerConfig, PipelineError};
use crate::raster::FeatureTensor;
use crate::seed::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("featurizer and network disagree: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub mean_loss: f64,
    pub holdout_accuracy: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// The network at the best epoch (highest holdout accuracy, latest on
    /// ties; the final epoch when there is no holdout).
    pub network: Network,
    pub log: Vec<TrainLogEntry>,
    pub best_epoch: usize,
}

/// Evaluation-time features for every sample, paired with class indices.
/// Sample order is preserved.
pub fn featurize_dataset(
    data: &Dataset,
    cfg: &FeaturizerConfig,
) -> Result<Vec<(FeatureTensor, usize)>, PipelineError> {
    data.samples()
        .par_iter()
        .map(|ink| {
            let class = data
                .class_index(ink.label().expect("dataset samples are labeled"))
                .expect("dataset labels are in the table");
            Ok((featurize_sample(ink, cfg)?, class))
        })
        .collect()
}

/// Fraction of samples whose argmax matches the class index.
pub fn accuracy(net: &Network, samples: &[(FeatureTensor, usize)]) -> Result<f64, NetError> {
    if samples.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let correct: usize = samples
        .par_iter()
        .map(|(x, truth)| {
            let probs = net.forward(x, false, 0)?;
            let best = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .expect("nonempty probabilities");
            Ok(usize::from(best == *truth))
        })
        .sum::<Result<usize, NetError>>()?;
    Ok(correct as f64 / samples.len() as f64)
}

fn check_shapes(
    featurizer: &FeaturizerConfig,
    spec: &ArchSpec,
    classes: usize,
) -> Result<(), TrainError> {
    let expected = (
        featurizer.channels(),
        featurizer.render.outer,
        featurizer.render.outer,
    );
    if spec.input != expected {
        return Err(TrainError::ShapeMismatch(format!(
            "network input {:?} does not fit featurizer output {:?}",
            spec.input, expected
        )));
    }
    if spec.classes != classes {
        return Err(TrainError::ShapeMismatch(format!(
            "network has {} classes, dataset has {}",
            spec.classes, classes
        )));
    }
    Ok(())
}

/// Train a fresh network on `train`, optionally scoring a holdout after
/// each epoch. Deterministic in (inputs, seed).
#[allow(clippy::too_many_arguments)]
pub fn train_network(
    train: &Dataset,
    holdout: Option<&Dataset>,
    featurizer: &FeaturizerConfig,
    policy: &DeformPolicy,
    spec: ArchSpec,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&TrainLogEntry),
) -> Result<TrainOutcome, TrainError> {
    featurizer.validate()?;
    policy.validate().map_err(PipelineError::from)?;
    cfg.validate(&spec)?;
    check_shapes(featurizer, &spec, train.class_table().len())?;
    if train.is_empty() {
        return Err(TrainError::Data(DataError::InvalidDataset(
            "training set is empty".into(),
        )));
    }
    if let Some(h) = holdout {
        if h.class_table() != train.class_table() {
            return Err(TrainError::Data(DataError::InvalidDataset(
                "holdout class table differs from the training set".into(),
            )));
        }
    }

    let holdout_feats = holdout
        .map(|h| featurize_dataset(h, featurizer))
        .transpose()?;
    let static_policy = policy.is_identity();
    let static_feats = if static_policy {
        Some(featurize_dataset(train, featurizer)?)
    } else {
        None
    };
    let classes: Vec<usize> = train
        .samples()
        .iter()
        .map(|ink| {
            train
                .class_index(ink.label().expect("dataset samples are labeled"))
                .expect("dataset labels are in the table")
        })
        .collect();

    let mut net = Network::init(spec, derive_seed(seed, "init", &[]));
    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best_epoch = 0usize;
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_params: Option<Vec<f64>> = None;

    for epoch in 0..cfg.epochs {
        let epoch_feats: Vec<(FeatureTensor, usize)> = match &static_feats {
            Some(f) => f.clone(),
            None => train
                .samples()
                .par_iter()
                .enumerate()
                .map(|(i, ink)| {
                    let draw = derive_seed(seed, "deform", &[epoch as u64, i as u64]);
                    Ok((featurize_train(ink, featurizer, policy, draw)?, classes[i]))
                })
                .collect::<Result<_, PipelineError>>()?,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shuffle", &[epoch as u64]));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&FeatureTensor, usize)> = chunk
                .iter()
                .map(|&i| (&epoch_feats[i].0, epoch_feats[i].1))
                .collect();
            let step = derive_seed(seed, "step", &[epoch as u64, bi as u64]);
            let mean = net.train_step(&batch, cfg, step)?;
            loss_sum += mean * batch.len() as f64;
        }
        let holdout_accuracy = holdout_feats
            .as_ref()
            .map(|f| accuracy(&net, f))
            .transpose()?;
        let entry = TrainLogEntry {
            epoch,
            mean_loss: loss_sum / n as f64,
            holdout_accuracy,
        };
        if let Some(acc) = holdout_accuracy {
            if acc >= best_acc {
                best_acc = acc;
                best_epoch = epoch;
                best_params = Some(net.params().to_vec());
            }
        }
        on_epoch(&entry);
        log.push(entry);
    }

    let network = match best_params {
        Some(params) => {
            let spec = net.arch().clone();
            Network::from_params(spec, params)?
        }
        None => {
            best_epoch = cfg.epochs - 1;
            net
        }
    };
    Ok(TrainOutcome {
        network,
        log,
        best_epoch,
    })
}
