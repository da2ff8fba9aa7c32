//! TOML experiment configuration.
//!
//! A file only needs the keys it changes: it is merged over the preset for
//! its `dataset.kind`, and any key the preset does not know is an error.

use std::fs;
use std::path::{Path, PathBuf};

use graphaug_core::datasets::SyntheticConfig;
use graphaug_core::policy::{PolicyConfig, PolicyMode};
use graphaug_core::reward::RewardConfig;
use graphaug_core::trainer::{ClassifierConfig, RlConfig};
use graphaug_core::transforms::{Category, DEFAULT_RATE};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tu::DEFAULT_DEGREE_CAP;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Colors,
    Triangles,
    /// TU flat files in `dataset.path`.
    Tu,
    /// A file written by `gen-data`, in `dataset.path`.
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub node_min: usize,
    pub node_max: usize,
    pub edge_prob_min: f64,
    pub edge_prob_max: f64,
    pub max_label: usize,
    /// Degree one-hot cap for TU datasets without node features.
    pub degree_cap: usize,
    /// Seed of the generator; the experiment seed is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self::preset(DatasetKind::Colors)
    }
}

impl DatasetConfig {
    pub fn preset(kind: DatasetKind) -> Self {
        let s = SyntheticConfig::default();
        let (n_train, n_val, n_test) = match kind {
            DatasetKind::Triangles => (5000, 1000, 1000),
            _ => (2000, 500, 500),
        };
        Self {
            kind,
            path: None,
            n_train,
            n_val,
            n_test,
            node_min: s.node_min,
            node_max: s.node_max,
            edge_prob_min: s.edge_prob_min,
            edge_prob_max: s.edge_prob_max,
            max_label: s.max_label,
            degree_cap: DEFAULT_DEGREE_CAP,
            seed: None,
        }
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_graphs: self.n_train + self.n_val + self.n_test,
            node_min: self.node_min,
            node_max: self.node_max,
            edge_prob_min: self.edge_prob_min,
            edge_prob_max: self.edge_prob_max,
            max_label: self.max_label,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DatasetKind::Colors => "colors",
            DatasetKind::Triangles => "triangles",
            DatasetKind::Tu => "tu",
            DatasetKind::File => "file",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    /// Seeds of fixed-split experiments (seed, seed + 1, ...).
    pub seeds: usize,
    pub folds: usize,
    pub repeats: usize,
    /// Element flip rate of the uniform and ground-truth baselines.
    pub rate: f64,
    /// Keep the policy's modification cap when augmenting classifier data.
    pub classifier_cap: bool,
    /// Held-out graphs averaged by the drop-probability probe.
    pub probe_graphs: usize,
    /// Held-out pairs scored after reward training.
    pub eval_pairs: usize,
    pub plots: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            seeds: 5,
            folds: 10,
            repeats: 3,
            rate: DEFAULT_RATE,
            classifier_cap: true,
            probe_graphs: 200,
            eval_pairs: 500,
            plots: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub reward: RewardConfig,
    pub policy: PolicyConfig,
    pub rl: RlConfig,
    pub classifier: ClassifierConfig,
    pub experiment: ExperimentSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(DatasetKind::Colors)
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for a dataset kind.
    pub fn preset(kind: DatasetKind) -> Self {
        let dataset = DatasetConfig::preset(kind);
        let reward = match kind {
            DatasetKind::Triangles => RewardConfig { epochs: 30, ..RewardConfig::default() },
            DatasetKind::Colors => RewardConfig { pairs_per_graph: 4, ..RewardConfig::default() },
            _ => RewardConfig::default(),
        };
        let classifier = ClassifierConfig::for_dataset(dataset.name());
        Self {
            seed: 0,
            dataset,
            reward,
            policy: PolicyConfig::default(),
            rl: RlConfig::default(),
            classifier,
            experiment: ExperimentSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_owned()))?;
        let kind = match user.get("dataset").and_then(|d| d.get("kind")) {
            Some(v) => DatasetKind::deserialize(v.clone())
                .map_err(|e| Error::Config(format!("dataset.kind: {}", e.message())))?,
            None => DatasetKind::Colors,
        };
        let mut merged = toml::Table::try_from(Self::preset(kind)).expect("preset serializes");
        merge(&mut merged, user);
        let config: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_owned()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        self.policy.validate()?;
        self.rl.validate()?;
        self.classifier.validate()?;
        self.dataset.synthetic().validate()?;
        if matches!(self.dataset.kind, DatasetKind::Tu | DatasetKind::File) && self.dataset.path.is_none() {
            return Err(Error::Config(format!("dataset kind `{}` needs dataset.path", self.dataset.name())));
        }
        if self.experiment.seeds == 0 || self.experiment.repeats == 0 || self.experiment.folds < 2 {
            return Err(Error::Config("experiment needs seeds >= 1, repeats >= 1 and folds >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.experiment.rate) {
            return Err(Error::Config(format!("experiment.rate {} outside [0, 1]", self.experiment.rate)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved configuration, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset.seed.unwrap_or(self.seed)
    }

    pub fn set_category_only(&mut self) {
        self.policy.mode = PolicyMode::CategoryOnly { rate: self.experiment.rate };
    }

    pub fn set_single_category(&mut self, category: Category) {
        self.policy.mode = PolicyMode::SingleCategory(category);
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
