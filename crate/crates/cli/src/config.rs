//! Run configuration: one JSON document, preset expansion, flag overrides.
//!
//! Resolution order is defaults < preset < explicit JSON fields < command
//! line flags, and everything is validated before any command does work.
//! Architecture strings may leave the input channel count as `M` and the
//! class count as `K`; both are substituted once the featurizer and the
//! dataset are known, and spelled-out numbers are cross-checked against
//! them.

use inkrec_core::augment::{AugmentError, DeformPolicy};
use inkrec_core::dataio::{DataError, SynthConfig};
use inkrec_core::ensemble::EnsembleError;
use inkrec_core::features::FeatureConfig;
use inkrec_core::net::{ArchError, ArchSpec, NetError, TrainConfig};
use inkrec_core::pipeline::{FeaturizerConfig, PipelineError, Preset, DEFAULT_NLN_GRID};
use inkrec_core::raster::OverlapMode;
use inkrec_core::train::TrainError;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_ARCH: &str = "Mx48x48-16C3-MP2-32C2-MP2-48C2-MP2-64C2-MP2-80C2-96N-KOutput";

/// Command failures carry their process exit code: 2 for configuration
/// problems caught before work starts, 1 for everything else.
#[derive(Debug, Error)]
pub enum CmdError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Failure(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 2,
            CmdError::Failure(_) => 1,
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Failure(e.to_string())
    }
}

impl From<DataError> for CmdError {
    fn from(e: DataError) -> Self {
        CmdError::Failure(e.to_string())
    }
}

impl From<AugmentError> for CmdError {
    fn from(e: AugmentError) -> Self {
        CmdError::Config(e.to_string())
    }
}

impl From<ArchError> for CmdError {
    fn from(e: ArchError) -> Self {
        CmdError::Config(e.to_string())
    }
}

impl From<PipelineError> for CmdError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::ConfigError(_) | PipelineError::Augment(_) => {
                CmdError::Config(e.to_string())
            }
            other => CmdError::Failure(other.to_string()),
        }
    }
}

impl From<NetError> for CmdError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::ConfigError(_) | NetError::Arch(_) => CmdError::Config(e.to_string()),
            other => CmdError::Failure(other.to_string()),
        }
    }
}

impl From<TrainError> for CmdError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::ShapeMismatch(_) => CmdError::Config(e.to_string()),
            TrainError::Pipeline(p) => p.into(),
            TrainError::Net(n) => n.into(),
            TrainError::Data(d) => d.into(),
        }
    }
}

impl From<EnsembleError> for CmdError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::ConfigError(_) => CmdError::Config(e.to_string()),
            EnsembleError::Pipeline(p) => p.into(),
            EnsembleError::Net(n) => n.into(),
            other => CmdError::Failure(other.to_string()),
        }
    }
}

/// The JSON document as written: every field optional so partial blocks
/// override only what they mention.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub preset: Option<String>,
    pub dataio: Option<RawDataio>,
    pub augment: Option<DeformPolicy>,
    pub nln: Option<RawNln>,
    pub features: Option<RawFeatures>,
    pub raster: Option<RawRaster>,
    pub net: Option<RawNet>,
    pub ensemble: Option<RawEnsemble>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDataio {
    pub num_classes: Option<usize>,
    pub samples_per_class: Option<usize>,
    pub jitter_scale: Option<f64>,
    pub holdout_per_class: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNln {
    pub enabled: Option<bool>,
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFeatures {
    pub sig_level: Option<u8>,
    pub use_dir8: Option<bool>,
    pub use_imaginary: Option<bool>,
    pub window_radius: Option<usize>,
    pub spacing: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRaster {
    pub inner: Option<usize>,
    pub outer: Option<usize>,
    pub overlap: Option<OverlapMode>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNet {
    pub arch: Option<String>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub dropout: Option<Vec<f64>>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEnsemble {
    pub threshold: Option<f64>,
}

/// Command-line flags that shadow config fields. The eval threshold flag is
/// not here: eval must know whether it was given explicitly, because a
/// manifest carries its own stored threshold as the default.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub arch: Option<String>,
    pub epochs: Option<usize>,
}

/// A fully resolved, validated run configuration.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub synth: SynthConfig,
    pub holdout_per_class: usize,
    pub augment: DeformPolicy,
    pub featurizer: FeaturizerConfig,
    pub arch: String,
    pub train: TrainConfig,
    pub threshold: f64,
}

impl Settings {
    pub fn load(config_path: Option<&Path>, overrides: &Overrides) -> Result<Settings, CmdError> {
        let mut raw: RawConfig = match config_path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CmdError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| CmdError::Config(format!("bad config {}: {e}", p.display())))?
            }
            None => RawConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            raw.seed = Some(seed);
        }
        if let Some(p) = &overrides.preset {
            raw.preset = Some(p.clone());
        }
        if let Some(a) = &overrides.arch {
            raw.net.get_or_insert_with(RawNet::default).arch = Some(a.clone());
        }
        if let Some(e) = overrides.epochs {
            raw.net.get_or_insert_with(RawNet::default).epochs = Some(e);
        }
        Settings::resolve(&raw)
    }

    pub fn resolve(raw: &RawConfig) -> Result<Settings, CmdError> {
        let preset = raw
            .preset
            .as_deref()
            .map(str::parse::<Preset>)
            .transpose()
            .map_err(|e| CmdError::Config(e.to_string()))?;

        let base = preset.map(|p| p.featurizer()).unwrap_or_default();
        let mut features: FeatureConfig = base.features;
        let mut spacing = base.spacing;
        if let Some(fb) = &raw.features {
            if let Some(v) = fb.sig_level {
                features.sig_level = v;
            }
            if let Some(v) = fb.use_dir8 {
                features.use_dir8 = v;
            }
            if let Some(v) = fb.use_imaginary {
                features.use_imaginary = v;
            }
            if let Some(v) = fb.window_radius {
                features.window_radius = v;
            }
            if let Some(v) = fb.spacing {
                spacing = v;
            }
        }

        let mut nln_grid = base.nln_grid;
        if let Some(nb) = &raw.nln {
            let enabled = nb.enabled.unwrap_or(nln_grid.is_some());
            let grid = nb.grid.or(nln_grid).unwrap_or(DEFAULT_NLN_GRID);
            nln_grid = enabled.then_some(grid);
        }

        let mut render = base.render;
        if let Some(rb) = &raw.raster {
            if let Some(v) = rb.inner {
                render.inner = v;
            }
            if let Some(v) = rb.outer {
                render.outer = v;
            }
            if let Some(v) = rb.overlap {
                render.overlap = v;
            }
        }

        let featurizer = FeaturizerConfig {
            features,
            nln_grid,
            spacing,
            render,
        };
        featurizer
            .validate()
            .map_err(|e| CmdError::Config(e.to_string()))?;

        let augment = match &raw.augment {
            Some(a) => *a,
            None => match preset {
                Some(p) if p.uses_deformation() => DeformPolicy {
                    use_warp: true,
                    use_leung: true,
                    ..DeformPolicy::default()
                },
                _ => DeformPolicy::disabled(),
            },
        };
        augment.validate()?;

        let seed = raw.seed.unwrap_or(42);
        let di = raw.dataio.clone().unwrap_or_default();
        let synth = SynthConfig {
            num_classes: di.num_classes.unwrap_or(10),
            samples_per_class: di.samples_per_class.unwrap_or(30),
            jitter_scale: di.jitter_scale.unwrap_or(0.08),
            seed,
        };
        synth
            .validate()
            .map_err(|e| CmdError::Config(e.to_string()))?;

        let net = raw.net.clone().unwrap_or_default();
        let train = TrainConfig {
            batch_size: net.batch_size.unwrap_or(96),
            learning_rate: net.learning_rate.unwrap_or(0.01),
            momentum: net.momentum.unwrap_or(0.9),
            dropout: net.dropout.unwrap_or_default(),
            epochs: net.epochs.unwrap_or(8),
        };

        let threshold = raw
            .ensemble
            .as_ref()
            .and_then(|e| e.threshold)
            .unwrap_or(0.99);
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(CmdError::Config(format!(
                "threshold {threshold} must be finite and non-negative"
            )));
        }

        Ok(Settings {
            seed,
            out_dir: raw.out_dir.clone(),
            synth,
            holdout_per_class: di.holdout_per_class.unwrap_or(5),
            augment,
            featurizer,
            arch: net.arch.unwrap_or_else(|| DEFAULT_ARCH.to_string()),
            train,
            threshold,
        })
    }
}

/// Substitute `M` (input channels) and `K` (classes) in an architecture
/// string, parse it, and cross-check spelled-out numbers against the
/// featurizer and dataset.
pub fn resolve_arch(
    arch: &str,
    channels: usize,
    outer: usize,
    classes: usize,
) -> Result<ArchSpec, CmdError> {
    let mut s = arch.to_string();
    if let Some(rest) = s.strip_prefix("Mx") {
        s = format!("{channels}x{rest}");
    }
    if let Some(head) = s.strip_suffix("KOutput") {
        s = format!("{head}{classes}Output");
    }
    let spec = ArchSpec::parse(&s)?;
    if spec.input != (channels, outer, outer) {
        return Err(CmdError::Config(format!(
            "architecture input {:?} does not match the featurizer's {}x{}x{} output",
            spec.input, channels, outer, outer
        )));
    }
    if spec.classes != classes {
        return Err(CmdError::Config(format!(
            "architecture has {} output classes, dataset has {}",
            spec.classes, classes
        )));
    }
    Ok(spec)
}
