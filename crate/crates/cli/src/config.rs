//! Declarative run configuration (TOML, versioned, unknown keys rejected).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mcce_core::channel::AngularPrior;
use mcce_core::estimators::EstimatorKind;
use mcce_core::rng::derive_seed;
use mcce_core::scenario::SystemConfig;
use mcce_core::vae::{ModelConfig, TrainSchedule};

pub const CONFIG_VERSION: u32 = 1;

/// Seed-derivation domains, so every stochastic stage of a run draws from a
/// disjoint stream family of the master seed.
pub mod domains {
    pub const TRAIN_SPLIT: u64 = 1;
    pub const VAL_SPLIT: u64 = 2;
    pub const TEST_SPLIT: u64 = 3;
    pub const EVAL_NOISE: u64 = 6;
    /// Per-AoA-pair seeds: `PAIR_BASE + pair index` (up to 16 pairs).
    pub const PAIR_BASE: u64 = 16;
    /// Weight init per model kind: `MODEL_INIT + kind offset`.
    pub const MODEL_INIT: u64 = 32;
    /// Training stream per model kind: `TRAINING + kind offset`.
    pub const TRAINING: u64 = 48;
}

/// Offsets distinguishing the trainable model kinds inside one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    MultiCell,
    MultiCellGenie,
    SingleCell,
}

impl ModelKind {
    pub fn offset(self) -> u64 {
        match self {
            ModelKind::MultiCell => 0,
            ModelKind::MultiCellGenie => 1,
            ModelKind::SingleCell => 2,
        }
    }

    pub fn checkpoint_name(self) -> &'static str {
        match self {
            ModelKind::MultiCell => "vae.mcva",
            ModelKind::MultiCellGenie => "vae-genie.mcva",
            ModelKind::SingleCell => "vae-single.mcva",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub system: SystemConfig,
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub paths: PathsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub multi_cell: ArchSection,
    pub single_cell: ArchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSection {
    pub latent_dim: usize,
    pub enc_channels: Vec<usize>,
    pub dec_channels: Vec<usize>,
    pub kernel: usize,
}

impl ArchSection {
    pub fn to_model_config(
        &self,
        antennas: usize,
        num_blocks: usize,
        genie: bool,
        init_seed: u64,
    ) -> ModelConfig {
        ModelConfig {
            antennas,
            num_blocks,
            latent_dim: self.latent_dim,
            enc_channels: self.enc_channels.clone(),
            dec_channels: self.dec_channels.clone(),
            kernel: self.kernel,
            genie,
            init_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 128,
            patience: 100,
            max_epochs: 1000,
            lr_decay_epochs: Vec::new(),
            lr_decay_factor: 1.0,
        }
    }
}

impl TrainingSection {
    pub fn to_schedule(&self, seed: u64) -> TrainSchedule {
        TrainSchedule {
            lr: self.lr,
            batch_size: self.batch_size,
            patience: self.patience,
            max_epochs: self.max_epochs,
            seed,
            lr_decay_epochs: self.lr_decay_epochs.clone(),
            lr_decay_factor: self.lr_decay_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub estimators: Vec<EstimatorKind>,
    /// Fixed evaluation SNR (dB) for `eval` and `sweep-aoa`.
    pub snr_db: f64,
    /// Grid for `sweep-snr` (dB).
    pub snr_grid_db: Vec<f64>,
    /// AoA prior pairs for `sweep-aoa` (and `gen/train --pair`).
    pub aoa_pairs: Vec<AoaPairSection>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            estimators: vec![
                EstimatorKind::Ls,
                EstimatorKind::Scov,
                EstimatorKind::GenieCov,
            ],
            snr_db: 10.0,
            snr_grid_db: mcce_core::bench::default_snr_grid(),
            aoa_pairs: default_aoa_pairs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AoaPairSection {
    pub label: String,
    pub priors: Vec<AngularPrior>,
}

/// The four reference AoA configurations: uniform over the circle, and
/// Gaussians centered at +-45 degrees with 90/60/30 degree spreads.
pub fn default_aoa_pairs() -> Vec<AoaPairSection> {
    let gauss = |std_deg: f64, label: &str| AoaPairSection {
        label: label.to_string(),
        priors: vec![
            AngularPrior::Gaussian {
                center_deg: 45.0,
                std_deg,
            },
            AngularPrior::Gaussian {
                center_deg: -45.0,
                std_deg,
            },
        ],
    };
    vec![
        AoaPairSection {
            label: "uniform".into(),
            priors: vec![
                AngularPrior::UniformFullCircle,
                AngularPrior::UniformFullCircle,
            ],
        },
        gauss(90.0, "std90"),
        gauss(60.0, "std60"),
        gauss(30.0, "std30"),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            model_dir: "models".into(),
            report_dir: "reports".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            );
        }
        self.system.validate()?;
        // both architectures must be buildable for this antenna count
        self.model
            .multi_cell
            .to_model_config(self.system.antennas, 2, false, 0)
            .validate()?;
        self.model
            .single_cell
            .to_model_config(self.system.antennas, 1, false, 0)
            .validate()?;
        if self.eval.estimators.is_empty() {
            bail!("eval.estimators must not be empty");
        }
        let mut labels = std::collections::HashSet::new();
        for pair in &self.eval.aoa_pairs {
            if pair.label.is_empty() || pair.label.contains(',') || pair.label.contains(' ') {
                bail!(
                    "aoa pair label `{}` must be nonempty without commas or spaces",
                    pair.label
                );
            }
            if !labels.insert(&pair.label) {
                bail!("duplicate aoa pair label `{}`", pair.label);
            }
            if pair.priors.len() != self.system.cells {
                bail!(
                    "aoa pair `{}` has {} priors for {} cells",
                    pair.label,
                    pair.priors.len(),
                    self.system.cells
                );
            }
            for p in &pair.priors {
                p.validate()?;
            }
        }
        for dir in [
            &self.paths.data_dir,
            &self.paths.model_dir,
            &self.paths.report_dir,
        ] {
            if dir.as_os_str().is_empty() {
                bail!("paths must not be empty");
            }
        }
        Ok(())
    }

    /// Canonical serialization (used for hashing and manifests).
    pub fn canonical_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical serialization.
    pub fn sha256(&self) -> Result<String> {
        let text = self.canonical_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }

    /// The system config with the priors of one named AoA pair substituted.
    pub fn system_for_pair(&self, label: &str) -> Result<(SystemConfig, u64)> {
        let idx = self
            .eval
            .aoa_pairs
            .iter()
            .position(|p| p.label == label)
            .with_context(|| format!("unknown aoa pair `{label}`"))?;
        let mut system = self.system.clone();
        system.priors = self.eval.aoa_pairs[idx].priors.clone();
        Ok((
            system,
            derive_seed(self.seed, domains::PAIR_BASE + idx as u64),
        ))
    }
}
