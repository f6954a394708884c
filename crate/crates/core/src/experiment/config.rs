//! TOML experiment configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{PartitionMode, SynthSpec};
use crate::defects::DefectKind;
use crate::error::{Error, Result};
use crate::fed::LocalTrainConfig;
use crate::qeen::QeenConfig;
use crate::replay::BufferConfig;
use crate::sac::{AgentEnvConfig, SacConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Fedavg,
    RuleBased,
    Dearfsac,
    /// The trained agent on the same setup with no defective clients.
    DearfsacNodefectShadow,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Fedavg => "fedavg",
            Strategy::RuleBased => "rule_based",
            Strategy::Dearfsac => "dearfsac",
            Strategy::DearfsacNodefectShadow => "dearfsac_nodefect_shadow",
        }
    }

    pub fn needs_agent(&self) -> bool {
        matches!(self, Strategy::Dearfsac | Strategy::DearfsacNodefectShadow)
    }

    pub const ALL: [Strategy; 4] = [
        Strategy::Fedavg,
        Strategy::RuleBased,
        Strategy::Dearfsac,
        Strategy::DearfsacNodefectShadow,
    ];
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| {
                Error::config(
                    "strategy",
                    format!("unknown strategy `{s}` (fedavg, rule_based, dearfsac, dearfsac_nodefect_shadow)"),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Use only the first `limit` items.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
    Synthetic {
        num_classes: usize,
        per_class: usize,
        feature_dim: usize,
        noise_sigma: f64,
    },
}

impl DatasetSpec {
    pub fn synth(&self) -> Option<SynthSpec> {
        match *self {
            DatasetSpec::Synthetic {
                num_classes,
                per_class,
                feature_dim,
                noise_sigma,
            } => Some(SynthSpec {
                num_classes,
                per_class,
                feature_dim,
                noise_sigma,
            }),
            DatasetSpec::Idx { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub validation_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            validation_fraction: 0.1,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub mode: PartitionMode,
    pub shards_per_client: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            mode: PartitionMode::Iid,
            shards_per_client: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    pub clients: usize,
    pub k: usize,
    /// Hidden widths of the client model (ReLU); softmax output.
    pub hidden: Vec<usize>,
    pub local: LocalTrainConfig,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            clients: 100,
            k: 10,
            hidden: vec![32],
            local: LocalTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefectConfig {
    pub m: usize,
    pub degree: f64,
    pub kinds: BTreeSet<DefectKind>,
}

impl Default for DefectConfig {
    fn default() -> Self {
        Self {
            m: 0,
            degree: 0.5,
            kinds: DefectKind::ALL.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckpointConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qeen: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sac: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Record wall-clock milliseconds per round. Off by default so that
    /// metrics files are byte-identical across reruns.
    pub wall_clock: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            wall_clock: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub strategy: Strategy,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Rounds per training episode.
    #[serde(default = "default_episode_rounds")]
    pub episode_rounds: usize,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub federation: FederationConfig,
    #[serde(default)]
    pub defects: DefectConfig,
    #[serde(default)]
    pub qeen: QeenConfig,
    #[serde(default)]
    pub sac: SacConfig,
    #[serde(default)]
    pub replay: BufferConfig,
    #[serde(default)]
    pub agent: AgentEnvConfig,
    #[serde(default)]
    pub checkpoints: CheckpointConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    0
}
fn default_rounds() -> usize {
    100
}
fn default_repeats() -> usize {
    3
}
fn default_episodes() -> usize {
    800
}
fn default_episode_rounds() -> usize {
    50
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn with_defaults(dataset: DatasetSpec, strategy: Strategy) -> Self {
        Self {
            dataset,
            strategy,
            seed: default_seed(),
            rounds: default_rounds(),
            repeats: default_repeats(),
            episodes: default_episodes(),
            episode_rounds: default_episode_rounds(),
            split: SplitConfig::default(),
            partition: PartitionConfig::default(),
            federation: FederationConfig::default(),
            defects: DefectConfig::default(),
            qeen: QeenConfig::default(),
            sac: SacConfig::default(),
            replay: BufferConfig::default(),
            agent: AgentEnvConfig::default(),
            checkpoints: CheckpointConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.federation;
        if f.k == 0 || f.k > f.clients {
            return Err(Error::config(
                "federation.k",
                format!(
                    "K = {} must satisfy 1 <= K <= N (federation.clients = {})",
                    f.k, f.clients
                ),
            ));
        }
        if self.defects.m > f.clients {
            return Err(Error::config(
                "defects.m",
                format!(
                    "M = {} exceeds N (federation.clients = {})",
                    self.defects.m, f.clients
                ),
            ));
        }
        if self.defects.m > 0 && self.defects.kinds.is_empty() {
            return Err(Error::config(
                "defects.kinds",
                "must be non-empty when M > 0",
            ));
        }
        if self.defects.kinds.contains(&DefectKind::CommLoss) && f.hidden.is_empty() {
            return Err(Error::config(
                "federation.hidden",
                "communication loss perturbs the last two layers; the client model needs a hidden layer",
            ));
        }
        if !(self.defects.degree >= 0.0 && self.defects.degree.is_finite()) {
            return Err(Error::config(
                "defects.degree",
                "must be finite and non-negative",
            ));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be at least 1"));
        }
        if self.episode_rounds == 0 {
            return Err(Error::config("episode_rounds", "must be at least 1"));
        }
        let s = &self.split;
        if !(s.validation_fraction > 0.0
            && s.test_fraction > 0.0
            && s.validation_fraction + s.test_fraction < 1.0)
        {
            return Err(Error::config(
                "split",
                "validation_fraction and test_fraction must be positive and sum below 1",
            ));
        }
        if f.local.batch_size == 0 {
            return Err(Error::config(
                "federation.local.batch_size",
                "must be positive",
            ));
        }
        if !(f.local.lr > 0.0) {
            return Err(Error::config("federation.local.lr", "must be positive"));
        }
        if !(self.agent.loss_clip > 0.0) {
            return Err(Error::config("agent.loss_clip", "must be positive"));
        }
        let r = &self.agent.reward;
        if !(r.kappa > 1.0) {
            return Err(Error::config("agent.reward.kappa", "must exceed 1"));
        }
        if !(r.target_accuracy > 0.0 && r.target_accuracy <= 1.0) {
            return Err(Error::config(
                "agent.reward.target_accuracy",
                "must lie in (0, 1]",
            ));
        }
        if r.beta.iter().any(|b| *b < 0.0) {
            return Err(Error::config(
                "agent.reward.beta",
                "weights must be non-negative",
            ));
        }
        if self.qeen.corpus_runs == 0 || self.qeen.corpus_rounds == 0 {
            return Err(Error::config(
                "qeen.corpus_runs/corpus_rounds",
                "must be positive",
            ));
        }
        if self.qeen.lambda1 < 0.0 || self.qeen.lambda2 < 0.0 {
            return Err(Error::config(
                "qeen.lambda1/lambda2",
                "must be non-negative",
            ));
        }
        self.sac.validate()?;
        self.replay.validate()?;
        if let Some(spec) = self.dataset.synth() {
            if spec.num_classes < 2 || spec.per_class == 0 || spec.feature_dim == 0 {
                return Err(Error::config(
                    "dataset",
                    "synthetic dataset needs >= 2 classes and positive sizes",
                ));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

/// Parses and validates a config file, logging every key that fell back to
/// its default.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let (cfg, defaulted) = parse_config_str(&text)?;
    for (key, value) in defaulted {
        log::info!("config: `{key}` not set, using default {value}");
    }
    Ok(cfg)
}

/// Parses config text; also returns `(key, default value)` for every key the
/// text left out.
pub fn parse_config_str(text: &str) -> Result<(ExperimentConfig, Vec<(String, String)>)> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
        field: e
            .span()
            .and_then(|s| text.get(s))
            .map(|t| t.trim().chars().take(60).collect())
            .unwrap_or_else(|| "config".into()),
        reason: e.message().to_string(),
    })?;
    cfg.validate()?;
    let raw: toml::Table = toml::from_str(text).expect("already parsed");
    let full: toml::Table = toml::from_str(&cfg.to_toml()).expect("serialized config parses");
    let mut defaulted = Vec::new();
    missing_keys(&raw, &full, "", &mut defaulted);
    Ok((cfg, defaulted))
}

fn missing_keys(
    raw: &toml::Table,
    full: &toml::Table,
    prefix: &str,
    out: &mut Vec<(String, String)>,
) {
    for (k, v) in full {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (raw.get(k), v) {
            (None, _) => out.push((key, v.to_string())),
            (Some(toml::Value::Table(r)), toml::Value::Table(f)) => missing_keys(r, f, &key, out),
            _ => {}
        }
    }
}
