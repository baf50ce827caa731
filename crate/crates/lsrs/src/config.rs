//! Experiment configuration: TOML with `[model]`, `[data]`, `[train]`,
//! `[smoothing]`, `[audit]` and `[run]` sections. Every key has a default, so
//! an empty file describes the reference blobs experiment.
//!
//! One seed (`run.seed`) drives data, initialization, training and
//! certification; each consumer draws from its own stream.

use std::path::{Path, PathBuf};

use lsrs_core::arch::ArchSpec;
use lsrs_core::audit::{AttackConfig, AuditConfig};
use lsrs_core::data::Blobs;
use lsrs_core::grad::NoiseSite;
use lsrs_core::smoothing::{Mode, SmoothingConfig};
use lsrs_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{0}")]
    Parse(#[from] toml::de::Error),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Model(#[from] lsrs_core::Error),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    LsRs,
    IsRs,
}

impl ModeName {
    pub fn mode(self) -> Mode {
        match self {
            ModeName::LsRs => Mode::LatentSpace,
            ModeName::IsRs => Mode::InputSpace,
        }
    }
}

impl std::str::FromStr for ModeName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ls-rs" => Ok(ModeName::LsRs),
            "is-rs" => Ok(ModeName::IsRs),
            other => Err(format!("unknown mode `{other}` (expected ls-rs or is-rs)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SiteName {
    Latent,
    Input,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub channels: usize,
    pub spatial: usize,
    pub blocks: usize,
    /// FoR numerator: leading blocks that are orthogonal residual blocks.
    pub ortho_blocks: usize,
    /// Blocks placed in the encoder; defaults to `ortho_blocks`.
    pub split_blocks: Option<usize>,
    pub group_size: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            channels: 8,
            spatial: 8,
            blocks: 8,
            ortho_blocks: 8,
            split_blocks: None,
            group_size: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Blobs,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    pub classes: usize,
    /// Input channels of the examples (blobs only; IDX files carry their own).
    pub channels: usize,
    pub spread: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Certify only the first `test_limit` test examples.
    pub test_limit: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::Blobs,
            classes: 4,
            channels: 1,
            spread: 0.15,
            train_per_class: 50,
            test_per_class: 25,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            test_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_step: usize,
    pub momentum: f64,
    /// Training noise level; defaults to `smoothing.sigma`.
    pub sigma: Option<f64>,
    pub noise_site: SiteName,
    pub batch_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.01,
            lr_decay: 0.1,
            lr_step: 15,
            momentum: 0.9,
            sigma: None,
            noise_site: SiteName::Latent,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingSection {
    pub mode: ModeName,
    pub sigma: f64,
    pub n0: usize,
    pub n: usize,
    pub alpha: f64,
    pub batch_size: usize,
}

impl Default for SmoothingSection {
    fn default() -> Self {
        let d = SmoothingConfig::default();
        Self {
            mode: ModeName::LsRs,
            sigma: d.sigma,
            n0: d.n0,
            n: d.n,
            alpha: d.alpha,
            batch_size: d.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub pairs: usize,
    pub scale: f64,
    pub refine_steps: usize,
    pub jacobian_points: usize,
    pub power_iters: usize,
    pub tolerance: f64,
    /// Certified examples to attack after evaluation (0 disables).
    pub attack_points: usize,
}

impl Default for AuditSection {
    fn default() -> Self {
        let d = AuditConfig::default();
        Self {
            pairs: d.n_pairs,
            scale: d.scale,
            refine_steps: d.refine_steps,
            jacobian_points: d.jacobian_points,
            power_iters: d.power_iters,
            tolerance: 1e-3,
            attack_points: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out: PathBuf,
    /// Record wall time per example. When false `time_s` is written as 0 and
    /// every output file is a pure function of the configuration.
    pub timing: bool,
    pub workers: usize,
    /// Radius thresholds for certified accuracy.
    pub radii: Vec<f64>,
    /// Encoder depths (in blocks) swept by `bench`.
    pub bench_splits: Vec<usize>,
    /// Test examples timed by `bench`.
    pub bench_examples: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            timing: true,
            workers: 1,
            radii: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
            bench_splits: vec![0, 2, 4, 6, 8],
            bench_examples: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub data: DataSection,
    pub train: TrainSection,
    pub smoothing: SmoothingSection,
    pub audit: AuditSection,
    pub run: RunSection,
}

/// Command-line overrides applied on top of a file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub sigma: Option<f64>,
    pub mode: Option<ModeName>,
    pub split: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.sigma {
            self.smoothing.sigma = s;
        }
        if let Some(m) = o.mode {
            self.smoothing.mode = m;
        }
        if let Some(s) = o.split {
            self.model.split_blocks = Some(s);
        }
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(n) = o.n {
            self.smoothing.n = n;
        }
        if let Some(a) = o.alpha {
            self.smoothing.alpha = a;
        }
        if let Some(out) = &o.out {
            self.run.out = out.clone();
        }
    }

    /// Input channels the model expects.
    pub fn input_channels(&self) -> usize {
        self.data.channels
    }

    pub fn arch(&self) -> ArchSpec {
        let m = &self.model;
        ArchSpec {
            input_channels: self.input_channels(),
            channels: m.channels,
            spatial: m.spatial,
            blocks: m.blocks,
            ortho_blocks: m.ortho_blocks,
            split_blocks: m.split_blocks.unwrap_or(m.ortho_blocks),
            group_size: m.group_size,
            classes: self.data.classes,
            seed: self.run.seed,
        }
    }

    pub fn blobs(&self) -> Blobs {
        Blobs {
            n_classes: self.data.classes,
            shape: [self.data.channels, self.model.spatial, self.model.spatial],
            spread: self.data.spread,
            seed: self.run.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            lr0: t.lr,
            lr_decay: t.lr_decay,
            lr_step: t.lr_step,
            momentum: t.momentum,
            sigma: t.sigma.unwrap_or(self.smoothing.sigma),
            noise_site: match t.noise_site {
                SiteName::Latent => NoiseSite::Latent,
                SiteName::Input => NoiseSite::Input,
            },
            batch_size: t.batch_size,
            seed: self.run.seed,
        }
    }

    pub fn smoothing_config(&self) -> SmoothingConfig {
        let s = &self.smoothing;
        SmoothingConfig {
            sigma: s.sigma,
            n0: s.n0,
            n: s.n,
            alpha: s.alpha,
            batch_size: s.batch_size,
            seed: self.run.seed,
        }
    }

    pub fn mode(&self) -> Mode {
        self.smoothing.mode.mode()
    }

    pub fn audit_config(&self) -> AuditConfig {
        let a = &self.audit;
        AuditConfig {
            n_pairs: a.pairs,
            scale: a.scale,
            refine_steps: a.refine_steps,
            jacobian_points: a.jacobian_points,
            power_iters: a.power_iters,
            seed: self.run.seed,
        }
    }

    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig { seed: self.run.seed, ..AttackConfig::default() }
    }

    /// Checks every section; model errors name the offending block.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.arch().validate()?;
        self.train_config().validate()?;
        self.smoothing_config().validate()?;
        let d = &self.data;
        if d.classes < 2 {
            return Err(invalid("data.classes must be at least 2"));
        }
        if d.source == DataSource::Blobs && (d.train_per_class == 0 || d.test_per_class == 0) {
            return Err(invalid("data.train_per_class and data.test_per_class must be positive"));
        }
        if d.source == DataSource::Idx && (d.train_images.is_none() || d.train_labels.is_none() || d.test_images.is_none() || d.test_labels.is_none()) {
            return Err(invalid("idx data needs train_images, train_labels, test_images and test_labels"));
        }
        if self.train.epochs == 0 {
            return Err(invalid("train.epochs must be positive"));
        }
        if self.run.workers == 0 {
            return Err(invalid("run.workers must be positive"));
        }
        if self.run.radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(invalid("run.radii must be finite and non-negative"));
        }
        if let Some(&s) = self.run.bench_splits.iter().find(|&&s| s > self.model.ortho_blocks) {
            return Err(invalid(format!(
                "bench split {s} would put non-orthogonal block {} in the encoder",
                self.model.ortho_blocks
            )));
        }
        if !(self.audit.tolerance >= 0.0) || self.audit.pairs == 0 || self.audit.power_iters == 0 {
            return Err(invalid("audit needs positive pairs and power_iters and a non-negative tolerance"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_reference_experiment() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.arch(), ArchSpec::reference(1, 4, 0));
        assert_eq!(cfg.train_config().sigma, cfg.smoothing.sigma);
    }

    #[test]
    fn sections_and_overrides() {
        let text = r#"
            [model]
            blocks = 4
            ortho_blocks = 2

            [smoothing]
            mode = "is-rs"
            n = 500

            [train]
            noise_site = "input"
            sigma = 0.5
        "#;
        let mut cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.mode(), Mode::InputSpace);
        assert_eq!(cfg.train_config().noise_site, NoiseSite::Input);
        assert_eq!(cfg.arch().split_blocks, 2);
        cfg.apply(&Overrides { sigma: Some(0.1), mode: Some(ModeName::LsRs), seed: Some(9), n: Some(7), ..Default::default() });
        assert_eq!(cfg.smoothing_config().sigma, 0.1);
        assert_eq!(cfg.train_config().sigma, 0.5);
        assert_eq!(cfg.smoothing_config().n, 7);
        assert_eq!(cfg.arch().seed, 9);
        assert_eq!(cfg.mode(), Mode::LatentSpace);
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("[model]\nblock = 3\n").is_err());
        assert!(ExperimentConfig::parse("[smoothing]\nmode = \"fast\"\n").is_err());
    }

    #[test]
    fn misplaced_split_names_the_block() {
        let mut cfg = ExperimentConfig::default();
        cfg.model.ortho_blocks = 4;
        cfg.model.split_blocks = Some(6);
        cfg.run.bench_splits = vec![0];
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("block 4 is in the encoder"), "{err}");
        cfg.model.split_blocks = Some(2);
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("orthogonal block 2"), "{err}");
    }
}
