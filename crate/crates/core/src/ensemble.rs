//! Multi-network combination: an early-exit cascade plus the classic
//! vote and average baselines.
//!
//! The cascade runs members in order and exits as soon as one's top class
//! probability strictly exceeds the confidence threshold; if none does, it
//! falls back to the arithmetic mean over all members. The fallback sums
//! member probabilities in member order, exactly like `average_predict`,
//! so the two paths agree bit for bit. Threshold 0 therefore degenerates
//! to the first member alone and any threshold above 1 to pure averaging.

use crate::dataio::{load_weights, DataError, Dataset};
use crate::ink::Ink;
use crate::net::{NetError, Network};
use crate::pipeline::{featurize, preprocess, FeaturizerConfig, PipelineError, PreprocKey};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid ensemble config: {0}")]
    ConfigError(String),
    #[error("member '{name}': {reason}")]
    MemberMismatch { name: String, reason: String },
}

/// One network plus the featurizer that feeds it.
#[derive(Debug, Clone)]
pub struct Member {
    pub name: String,
    pub featurizer: FeaturizerConfig,
    pub network: Network,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
    /// 1-based stage whose confidence ended the cascade; `None` means the
    /// mean-probability fallback (or a non-cascade method) decided.
    pub exit_stage: Option<usize>,
    pub members_evaluated: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMethod {
    Cascade,
    Vote,
    Average,
    /// The first member alone, unconditionally.
    Single,
}

impl std::fmt::Display for EvalMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EvalMethod::Cascade => "cascade",
            EvalMethod::Vote => "vote",
            EvalMethod::Average => "average",
            EvalMethod::Single => "single",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for EvalMethod {
    type Err = EnsembleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cascade" => Ok(EvalMethod::Cascade),
            "vote" => Ok(EvalMethod::Vote),
            "average" => Ok(EvalMethod::Average),
            "single" => Ok(EvalMethod::Single),
            other => Err(EnsembleError::ConfigError(format!(
                "unknown method {other:?}, expected cascade, vote, average, or single"
            ))),
        }
    }
}

/// Everything about an evaluation run except how long it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub method: EvalMethod,
    pub threshold: f64,
    pub samples: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Early exits per 1-based cascade stage; all zero for vote/average.
    pub exit_histogram: Vec<usize>,
    /// Samples decided by the mean fallback (every sample, for vote/average).
    pub fallback_exits: usize,
    pub mean_members_evaluated: f64,
}

/// Timing lives apart from the stats so determinism checks can compare
/// everything else exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalTiming {
    pub wall_seconds: f64,
    pub samples_per_second: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub stats: EvalStats,
    pub timing: EvalTiming,
}

fn argmax(probs: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    (best, probs[best])
}

fn mean_probs(all: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; all[0].len()];
    for probs in all {
        for (a, &p) in acc.iter_mut().zip(probs) {
            *a += p;
        }
    }
    let n = all.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    acc
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<Member>,
    class_table: Vec<String>,
    threshold: f64,
}

impl Ensemble {
    pub fn new(
        members: Vec<Member>,
        class_table: Vec<String>,
        threshold: f64,
    ) -> Result<Ensemble, EnsembleError> {
        if members.is_empty() {
            return Err(EnsembleError::ConfigError(
                "ensemble needs at least one member".into(),
            ));
        }
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(EnsembleError::ConfigError(format!(
                "threshold {threshold} must be finite and non-negative"
            )));
        }
        if class_table.is_empty() {
            return Err(EnsembleError::ConfigError("class table is empty".into()));
        }
        for (i, m) in members.iter().enumerate() {
            if members[..i].iter().any(|o| o.name == m.name) {
                return Err(EnsembleError::ConfigError(format!(
                    "duplicate member name '{}'",
                    m.name
                )));
            }
            m.featurizer.validate()?;
            let spec = m.network.arch();
            if spec.classes != class_table.len() {
                return Err(EnsembleError::MemberMismatch {
                    name: m.name.clone(),
                    reason: format!(
                        "network has {} classes, table has {}",
                        spec.classes,
                        class_table.len()
                    ),
                });
            }
            let expected = (
                m.featurizer.channels(),
                m.featurizer.render.outer,
                m.featurizer.render.outer,
            );
            if spec.input != expected {
                return Err(EnsembleError::MemberMismatch {
                    name: m.name.clone(),
                    reason: format!(
                        "network input {:?} does not fit featurizer output {:?}",
                        spec.input, expected
                    ),
                });
            }
        }
        Ok(Ensemble {
            members,
            class_table,
            threshold,
        })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn class_table(&self) -> &[String] {
        &self.class_table
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn member_probs(
        &self,
        member: &Member,
        ink: &Ink,
        cache: &mut HashMap<PreprocKey, Ink>,
    ) -> Result<Vec<f64>, EnsembleError> {
        let key = member.featurizer.preproc_key();
        if !cache.contains_key(&key) {
            cache.insert(key, preprocess(ink, &member.featurizer)?);
        }
        let x = featurize(&cache[&key], &member.featurizer)?;
        Ok(member.network.forward(&x, false, 0)?)
    }

    /// Early-exit cascade: members in order, exit on max probability
    /// strictly above the threshold, mean fallback otherwise.
    pub fn cascade_predict(&self, ink: &Ink) -> Result<Prediction, EnsembleError> {
        let mut cache = HashMap::new();
        let mut all = Vec::with_capacity(self.members.len());
        for (i, member) in self.members.iter().enumerate() {
            let probs = self.member_probs(member, ink, &mut cache)?;
            let (class, top) = argmax(&probs);
            if top > self.threshold {
                return Ok(Prediction {
                    class,
                    probs,
                    exit_stage: Some(i + 1),
                    members_evaluated: i + 1,
                });
            }
            all.push(probs);
        }
        let probs = mean_probs(&all);
        let (class, _) = argmax(&probs);
        Ok(Prediction {
            class,
            probs,
            exit_stage: None,
            members_evaluated: self.members.len(),
        })
    }

    /// Arithmetic mean of every member's probabilities.
    pub fn average_predict(&self, ink: &Ink) -> Result<Prediction, EnsembleError> {
        let all = self.all_member_probs(ink)?;
        let probs = mean_probs(&all);
        let (class, _) = argmax(&probs);
        Ok(Prediction {
            class,
            probs,
            exit_stage: None,
            members_evaluated: self.members.len(),
        })
    }

    /// Plurality over member argmaxes; ties break by higher mean
    /// probability, then lower class index.
    pub fn vote_predict(&self, ink: &Ink) -> Result<Prediction, EnsembleError> {
        let all = self.all_member_probs(ink)?;
        let mut votes = vec![0usize; self.class_table.len()];
        for probs in &all {
            votes[argmax(probs).0] += 1;
        }
        let probs = mean_probs(&all);
        let top = *votes.iter().max().expect("nonempty class table");
        let mut class = usize::MAX;
        for c in 0..votes.len() {
            if votes[c] == top && (class == usize::MAX || probs[c] > probs[class]) {
                class = c;
            }
        }
        Ok(Prediction {
            class,
            probs,
            exit_stage: None,
            members_evaluated: self.members.len(),
        })
    }

    /// The first member's verdict, ignoring the rest.
    pub fn single_predict(&self, ink: &Ink) -> Result<Prediction, EnsembleError> {
        let mut cache = HashMap::new();
        let probs = self.member_probs(&self.members[0], ink, &mut cache)?;
        let (class, _) = argmax(&probs);
        Ok(Prediction {
            class,
            probs,
            exit_stage: Some(1),
            members_evaluated: 1,
        })
    }

    fn all_member_probs(&self, ink: &Ink) -> Result<Vec<Vec<f64>>, EnsembleError> {
        let mut cache = HashMap::new();
        self.members
            .iter()
            .map(|m| self.member_probs(m, ink, &mut cache))
            .collect()
    }

    pub fn predict(&self, ink: &Ink, method: EvalMethod) -> Result<Prediction, EnsembleError> {
        match method {
            EvalMethod::Cascade => self.cascade_predict(ink),
            EvalMethod::Vote => self.vote_predict(ink),
            EvalMethod::Average => self.average_predict(ink),
            EvalMethod::Single => self.single_predict(ink),
        }
    }

    /// Run the whole dataset through one method. The dataset's class table
    /// must match the ensemble's exactly.
    pub fn evaluate(&self, data: &Dataset, method: EvalMethod) -> Result<EvalReport, EnsembleError> {
        if data.class_table() != self.class_table.as_slice() {
            return Err(EnsembleError::ConfigError(
                "dataset class table does not match the ensemble".into(),
            ));
        }
        if data.is_empty() {
            return Err(EnsembleError::ConfigError("dataset is empty".into()));
        }
        let start = Instant::now();
        let mut correct = 0usize;
        let mut exit_histogram = vec![0usize; self.members.len()];
        let mut fallback_exits = 0usize;
        let mut members_total = 0usize;
        for ink in data.samples() {
            let truth = data
                .class_index(ink.label().expect("dataset samples are labeled"))
                .expect("dataset labels are in the table");
            let pred = self.predict(ink, method)?;
            if pred.class == truth {
                correct += 1;
            }
            match pred.exit_stage {
                Some(stage) => exit_histogram[stage - 1] += 1,
                None => fallback_exits += 1,
            }
            members_total += pred.members_evaluated;
        }
        let wall = start.elapsed().as_secs_f64();
        let samples = data.len();
        Ok(EvalReport {
            stats: EvalStats {
                method,
                threshold: self.threshold,
                samples,
                correct,
                accuracy: correct as f64 / samples as f64,
                exit_histogram,
                fallback_exits,
                mean_members_evaluated: members_total as f64 / samples as f64,
            },
            timing: EvalTiming {
                wall_seconds: wall,
                samples_per_second: samples as f64 / wall.max(1e-9),
            },
        })
    }
}

/// On-disk description of an ensemble: a confidence threshold plus, per
/// member, a weight-file path (relative to the manifest) and the featurizer
/// that must feed it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub threshold: f64,
    pub members: Vec<ManifestMember>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestMember {
    pub name: String,
    pub weights: String,
    pub featurizer: FeaturizerConfig,
}

pub fn save_manifest(path: &Path, manifest: &EnsembleManifest) -> Result<(), EnsembleError> {
    let json =
        serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, json).map_err(DataError::from)?;
    Ok(())
}

/// Load a manifest and every member it names. Each weight file's stored
/// feature hash must match the manifest featurizer, and all members must
/// agree on the class table.
pub fn load_ensemble(manifest_path: &Path) -> Result<Ensemble, EnsembleError> {
    let text = std::fs::read_to_string(manifest_path).map_err(DataError::from)?;
    let manifest: EnsembleManifest = serde_json::from_str(&text)
        .map_err(|e| EnsembleError::ConfigError(format!("bad manifest: {e}")))?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut members = Vec::with_capacity(manifest.members.len());
    let mut class_table: Option<Vec<String>> = None;
    for mm in manifest.members {
        let wf = load_weights(&dir.join(&mm.weights))?;
        let expected = mm.featurizer.config_hash();
        if wf.feature_hash != expected {
            return Err(EnsembleError::MemberMismatch {
                name: mm.name,
                reason: format!(
                    "weight file was made with featurizer {:016x}, manifest says {:016x}",
                    wf.feature_hash, expected
                ),
            });
        }
        match &class_table {
            None => class_table = Some(wf.class_table),
            Some(t) => {
                if *t != wf.class_table {
                    return Err(EnsembleError::MemberMismatch {
                        name: mm.name,
                        reason: "class table differs from earlier members".into(),
                    });
                }
            }
        }
        members.push(Member {
            name: mm.name,
            featurizer: mm.featurizer,
            network: wf.network,
        });
    }
    let class_table =
        class_table.ok_or_else(|| EnsembleError::ConfigError("manifest has no members".into()))?;
    Ensemble::new(members, class_table, manifest.threshold)
}
