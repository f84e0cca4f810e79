//! Dataset ingestion, synthesis, and binary serialization.
//!
//! Sources: the POT stroke format, a JSON-lines interchange format, and a
//! deterministic synthetic glyph generator for desk-scale experiments.
//! Sinks: feature-tensor archives and network weight files, both bit-exact
//! little-endian formats.

mod binfmt;
mod inkjson;
mod pot;
mod synth;

pub use binfmt::{
    load_archive, load_tensor, load_weights, read_tensor, read_weights, save_archive,
    save_tensor, save_weights, write_tensor, write_weights, TensorArchive, WeightFile,
    ARCHIVE_MAGIC, FORMAT_VERSION, TENSOR_MAGIC, WEIGHTS_MAGIC,
};
pub use inkjson::{load_inkjson, read_inkjson, save_inkjson, write_inkjson};
pub use pot::{parse_pot, write_pot};
pub use synth::{synth_dataset, SynthConfig};

use crate::ink::{Ink, InkError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed record at byte {offset}: {reason}")]
    MalformedRecord { offset: usize, reason: String },
    #[error("value not representable in the target format: {0}")]
    UnrepresentableValue(String),
    #[error("parse error at line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("format error: {0}")]
    FormatError(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error(transparent)]
    Ink(#[from] InkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Labeled samples plus the class table that orders their labels.
///
/// Every sample carries a label present in the table; table entries are
/// distinct and their order defines class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Ink>,
    class_table: Vec<String>,
}

impl Dataset {
    pub fn new(samples: Vec<Ink>, class_table: Vec<String>) -> Result<Self, DataError> {
        for (i, l) in class_table.iter().enumerate() {
            if class_table[..i].contains(l) {
                return Err(DataError::InvalidDataset(format!(
                    "duplicate class label '{l}'"
                )));
            }
        }
        for (i, s) in samples.iter().enumerate() {
            let label = s.label().ok_or_else(|| {
                DataError::InvalidDataset(format!("sample {i} has no label"))
            })?;
            if !class_table.iter().any(|c| c == label) {
                return Err(DataError::InvalidDataset(format!(
                    "sample {i} label '{label}' not in class table"
                )));
            }
        }
        Ok(Dataset {
            samples,
            class_table,
        })
    }

    /// Build the class table from labels in order of first appearance.
    pub fn from_samples(samples: Vec<Ink>) -> Result<Self, DataError> {
        let mut table: Vec<String> = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            let label = s.label().ok_or_else(|| {
                DataError::InvalidDataset(format!("sample {i} has no label"))
            })?;
            if !table.iter().any(|c| c == label) {
                table.push(label.to_string());
            }
        }
        Dataset::new(samples, table)
    }

    pub fn samples(&self) -> &[Ink] {
        &self.samples
    }

    pub fn class_table(&self) -> &[String] {
        &self.class_table
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_table.iter().position(|c| c == label)
    }

    /// Split off the last `per_class` samples of each class (in dataset
    /// order) as a holdout. Both halves share the full class table. Fails
    /// if any class cannot give up `per_class` samples and keep at least
    /// one for training.
    pub fn split_holdout(&self, per_class: usize) -> Result<(Dataset, Dataset), DataError> {
        let mut counts = vec![0usize; self.class_table.len()];
        for s in &self.samples {
            let idx = self
                .class_index(s.label().expect("validated at construction"))
                .expect("validated at construction");
            counts[idx] += 1;
        }
        for (idx, &c) in counts.iter().enumerate() {
            if c <= per_class {
                return Err(DataError::InvalidDataset(format!(
                    "class '{}' has {} samples, cannot hold out {}",
                    self.class_table[idx], c, per_class
                )));
            }
        }
        let mut seen = vec![0usize; self.class_table.len()];
        let mut train = Vec::new();
        let mut test = Vec::new();
        for s in &self.samples {
            let idx = self
                .class_index(s.label().expect("validated"))
                .expect("validated");
            seen[idx] += 1;
            if seen[idx] <= counts[idx] - per_class {
                train.push(s.clone());
            } else {
                test.push(s.clone());
            }
        }
        Ok((
            Dataset {
                samples: train,
                class_table: self.class_table.clone(),
            },
            Dataset {
                samples: test,
                class_table: self.class_table.clone(),
            },
        ))
    }
}
