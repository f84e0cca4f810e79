//! End-to-end featurization: raw ink in, feature tensor out.
//!
//! The same preprocessing (normalize, optional density equalization,
//! resample, pen-lift strokes) feeds both training and evaluation; training
//! additionally applies a sampled deformation right after normalization.
//! Everything that affects evaluation-time features is captured by
//! `config_hash`, which weight files store so stale models cannot be
//! evaluated against a different featurizer.

use crate::augment::{sample_deformation, AugmentError, DeformPolicy};
use crate::features::{point_features, FeatureConfig, FeatureError};
use crate::ink::{Ink, InkError};
use crate::nln::apply_nln;
use crate::raster::{render, FeatureTensor, RasterError, RenderConfig};
use crate::seed::fnv1a;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SPACING: f64 = 0.04;
pub const DEFAULT_NLN_GRID: usize = 64;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ink(#[from] InkError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("invalid featurizer config: {0}")]
    ConfigError(String),
}

/// Everything the featurizer needs, beyond the deformation policy (which
/// only affects training draws, never evaluation features).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub features: FeatureConfig,
    /// Grid size for line-density equalization; `None` disables it.
    pub nln_grid: Option<usize>,
    /// Resampling distance in unit-box coordinates.
    pub spacing: f64,
    pub render: RenderConfig,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            features: FeatureConfig::default(),
            nln_grid: None,
            spacing: DEFAULT_SPACING,
            render: RenderConfig::default(),
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.features.validate()?;
        self.render.validate()?;
        if !(self.spacing > 0.0 && self.spacing <= 0.5) {
            return Err(PipelineError::ConfigError(format!(
                "spacing {} outside (0, 0.5]",
                self.spacing
            )));
        }
        if let Some(n) = self.nln_grid {
            if !(8..=4096).contains(&n) {
                return Err(PipelineError::ConfigError(format!(
                    "density grid size {n} outside [8, 4096]"
                )));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.features.channels()
    }

    /// Stable fingerprint of everything that shapes evaluation features.
    /// Stored in weight files and checked before evaluation.
    pub fn config_hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        fnv1a(json.as_bytes())
    }

    /// Key under which preprocessed ink can be shared: two configs with the
    /// same key produce identical `preprocess` output.
    pub fn preproc_key(&self) -> PreprocKey {
        PreprocKey {
            nln_grid: self.nln_grid,
            spacing_bits: self.spacing.to_bits(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PreprocKey {
    nln_grid: Option<usize>,
    spacing_bits: u64,
}

/// Normalize, optionally equalize line density, resample, and add pen-lift
/// strokes. The result is what `featurize` expects.
pub fn preprocess(ink: &Ink, cfg: &FeaturizerConfig) -> Result<Ink, PipelineError> {
    cfg.validate()?;
    let norm = ink.normalize_to_box(true)?;
    let shaped = match cfg.nln_grid {
        Some(n) => apply_nln(&norm, n),
        None => norm,
    };
    let resampled = shaped.resample_equidistant(cfg.spacing)?;
    Ok(resampled.with_imaginary_strokes())
}

/// Feature tensor for already-preprocessed ink.
pub fn featurize(preprocessed: &Ink, cfg: &FeaturizerConfig) -> Result<FeatureTensor, PipelineError> {
    let feats = point_features(preprocessed, &cfg.features)?;
    Ok(render(preprocessed, &feats, &cfg.features, &cfg.render)?)
}

/// One-shot preprocess + featurize for evaluation.
pub fn featurize_sample(ink: &Ink, cfg: &FeaturizerConfig) -> Result<FeatureTensor, PipelineError> {
    let pre = preprocess(ink, cfg)?;
    featurize(&pre, cfg)
}

/// Training-time featurization: a deformation drawn from `policy` by `seed`
/// is applied to the normalized ink before the rest of the pipeline. With
/// `DeformPolicy::disabled()` the output is bit-identical to
/// `featurize_sample`.
pub fn featurize_train(
    ink: &Ink,
    cfg: &FeaturizerConfig,
    policy: &DeformPolicy,
    seed: u64,
) -> Result<FeatureTensor, PipelineError> {
    cfg.validate()?;
    policy.validate()?;
    let norm = ink.normalize_to_box(true)?;
    let deformed = sample_deformation(policy, seed).apply(&norm)?;
    let shaped = match cfg.nln_grid {
        Some(n) => apply_nln(&deformed, n),
        None => deformed,
    };
    let resampled = shaped.resample_equidistant(cfg.spacing)?;
    let with_lifts = resampled.with_imaginary_strokes();
    featurize(&with_lifts, cfg)
}

/// Named feature bundles, ordered roughly by cost and richness. These are
/// the configurations the command-line tool and the ensemble presets refer
/// to by letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::A,
        Preset::B,
        Preset::C,
        Preset::D,
        Preset::E,
        Preset::F,
        Preset::G,
        Preset::H,
    ];

    pub fn feature_config(&self) -> FeatureConfig {
        let (sig_level, use_dir8, use_imaginary) = match self {
            Preset::A => (0, false, false),
            Preset::B => (1, false, false),
            Preset::C | Preset::D | Preset::E => (2, false, false),
            Preset::F => (2, true, false),
            Preset::G => (2, false, true),
            Preset::H => (2, true, true),
        };
        FeatureConfig {
            sig_level,
            use_dir8,
            use_imaginary,
            ..FeatureConfig::default()
        }
    }

    /// Whether training under this preset draws shape deformations.
    pub fn uses_deformation(&self) -> bool {
        matches!(self, Preset::D | Preset::H)
    }

    /// Whether the pipeline equalizes line density.
    pub fn uses_nln(&self) -> bool {
        matches!(self, Preset::E | Preset::H)
    }

    pub fn featurizer(&self) -> FeaturizerConfig {
        FeaturizerConfig {
            features: self.feature_config(),
            nln_grid: if self.uses_nln() {
                Some(DEFAULT_NLN_GRID)
            } else {
                None
            },
            ..FeaturizerConfig::default()
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            Preset::A => "presence map only",
            Preset::B => "presence + displacement",
            Preset::C => "level-2 signature maps",
            Preset::D => "level-2 signatures, deformed training",
            Preset::E => "level-2 signatures, density-equalized",
            Preset::F => "level-2 signatures + direction maps",
            Preset::G => "level-2 signatures + pen-lift strokes",
            Preset::H => "all maps, deformed + density-equalized",
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Preset {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Preset::A),
            "B" => Ok(Preset::B),
            "C" => Ok(Preset::C),
            "D" => Ok(Preset::D),
            "E" => Ok(Preset::E),
            "F" => Ok(Preset::F),
            "G" => Ok(Preset::G),
            "H" => Ok(Preset::H),
            other => Err(PipelineError::ConfigError(format!(
                "unknown preset {other:?}, expected A..H"
            ))),
        }
    }
}
