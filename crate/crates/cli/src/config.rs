//! Run configuration: a TOML file with `[train]`, `[model]` and `[data]`
//! sections, merged with command-line overrides. Flags win over the file,
//! the file wins over defaults; unknown keys are rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use ictal_core::model::{ModelConfig, TrunkStage};
use ictal_core::nn::{ConvSpec, PoolSpec};
use ictal_core::trainer::{ExtraStepSchedule, TrainConfig};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub data: DataSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub l2_coeff: Option<f64>,
    pub keep_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub w1: Option<f64>,
    pub extra_step: Option<ExtraStepSchedule>,
    pub verify_branch_separation: Option<bool>,
    /// Save a checkpoint every k epochs (0 = final checkpoint only).
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub window_len: Option<usize>,
    pub decomp_filters: Option<usize>,
    pub trunk_filters: Option<Vec<usize>>,
    pub fc_hidden: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Global amplitude scale applied at load time (1.0 = raw).
    pub scale: Option<f64>,
    /// Window overlap fraction; 0.5 is the one-second/half-second grid.
    pub overlap: Option<f64>,
    /// Subject eligibility threshold; set 250.0 for the clinical protocol,
    /// 0 accepts every manifest subject.
    pub min_seizure_seconds: Option<f64>,
}

/// Command-line overrides shared by the training commands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Structured key-value config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Batch size.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Random seed for init, shuffling and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dropout keep rate in (0, 1].
    #[arg(long)]
    pub keep_rate: Option<f64>,
    /// Reconstruction weight w1 (w2 = 1 - w1).
    #[arg(long)]
    pub w1: Option<f64>,
}

/// Everything a run needs, resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub checkpoint_every: usize,
    pub model: ModelSection,
    pub scale: f64,
    pub overlap: f64,
    pub min_seizure_seconds: f64,
}

pub fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let parsed: FileConfig = toml::from_str(&text)
        .with_context(|| format!("cannot parse config file {}", path.display()))?;
    Ok(parsed)
}

/// Resolve file + flags into a concrete configuration. Flags win.
pub fn resolve(overrides: &Overrides) -> Result<RunConfig> {
    let file = match &overrides.config {
        Some(path) => load_file(path)?,
        None => FileConfig::default(),
    };
    let defaults = TrainConfig::default();
    let mut train = TrainConfig {
        epochs: file.train.epochs.unwrap_or(defaults.epochs),
        learning_rate: file.train.learning_rate.unwrap_or(defaults.learning_rate),
        l2_coeff: file.train.l2_coeff.unwrap_or(defaults.l2_coeff),
        keep_rate: file.train.keep_rate.unwrap_or(defaults.keep_rate),
        batch_size: file.train.batch_size.unwrap_or(defaults.batch_size),
        seed: file.train.seed.unwrap_or(defaults.seed),
        w1: file.train.w1.unwrap_or(defaults.w1),
        w2: defaults.w2,
        extra_step: file.train.extra_step.unwrap_or(defaults.extra_step),
        verify_branch_separation: file
            .train
            .verify_branch_separation
            .unwrap_or(defaults.verify_branch_separation),
    };
    if let Some(v) = overrides.epochs {
        train.epochs = v;
    }
    if let Some(v) = overrides.lr {
        train.learning_rate = v;
    }
    if let Some(v) = overrides.batch {
        train.batch_size = v;
    }
    if let Some(v) = overrides.seed {
        train.seed = v;
    }
    if let Some(v) = overrides.keep_rate {
        train.keep_rate = v;
    }
    if let Some(v) = overrides.w1 {
        train.w1 = v;
    }
    train.w2 = 1.0 - train.w1;

    let scale = file.data.scale.unwrap_or(1.0);
    let overlap = file.data.overlap.unwrap_or(0.5);
    if !(0.0..1.0).contains(&overlap) {
        bail!("data.overlap must be in [0, 1), got {overlap}");
    }
    Ok(RunConfig {
        train,
        checkpoint_every: file.train.checkpoint_every.unwrap_or(0),
        model: file.model,
        scale,
        overlap,
        min_seizure_seconds: file.data.min_seizure_seconds.unwrap_or(0.0),
    })
}

impl RunConfig {
    /// Architecture for a fold with `num_patients` training subjects.
    /// Trunk kernels and pools follow the standard pattern: 3x3 kernels on
    /// the first two stages, 2x2 after, 2x2 pooling except a 2x1 final pool.
    pub fn model_config(&self, num_patients: usize) -> ModelConfig {
        let mut config = ModelConfig::new(num_patients);
        if let Some(v) = self.model.window_len {
            config.window_len = v;
        }
        if let Some(v) = self.model.decomp_filters {
            config.decomp = ConvSpec::new(v, [3, 3], [2, 2]);
            config.decomp_pool = PoolSpec::new([2, 1], [2, 1]);
        }
        if let Some(filters) = &self.model.trunk_filters {
            let n = filters.len();
            config.trunk = filters
                .iter()
                .enumerate()
                .map(|(i, &f)| TrunkStage {
                    filters: f,
                    kernel: if i < 2 { [3, 3] } else { [2, 2] },
                    pool_window: if i + 1 == n { [2, 1] } else { [2, 2] },
                    pool_stride: if i + 1 == n { [2, 1] } else { [2, 2] },
                })
                .collect();
        }
        if let Some(v) = self.model.fc_hidden {
            config.fc_hidden = v;
        }
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_file() {
        let dir = std::env::temp_dir().join("ictal-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(
            &path,
            "[train]\nepochs = 7\nseed = 3\n[model]\nwindow_len = 64\n",
        )
        .unwrap();
        let overrides = Overrides {
            config: Some(path),
            epochs: Some(9),
            ..Overrides::default()
        };
        let run = resolve(&overrides).unwrap();
        assert_eq!(run.train.epochs, 9); // flag wins
        assert_eq!(run.train.seed, 3); // file wins over default
        assert_eq!(run.model_config(2).window_len, 64);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = std::env::temp_dir().join("ictal-config-unknown");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(&path, "[train]\nnonsense = 1\n").unwrap();
        let overrides = Overrides {
            config: Some(path),
            ..Overrides::default()
        };
        assert!(resolve(&overrides).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn w2_follows_w1() {
        let overrides = Overrides {
            w1: Some(0.3),
            ..Overrides::default()
        };
        let run = resolve(&overrides).unwrap();
        assert_eq!(run.train.w1, 0.3);
        assert!((run.train.w2 - 0.7).abs() < 1e-15);
    }
}
