use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::managers::{CorpusConfig, ManagerKind, NetConfig, RlConfig, TrainConfig};
use crate::populations::{default_roster, PopulationRoster};
use crate::rollout::MatchConfig;
use crate::tom::{FinetuneConfig, TomConfig, TomCorpusConfig, TomMode};

/// One experiment, read from a single TOML file. Every table is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    /// Run directory for reports, transcripts and debug dumps.
    pub output_dir: PathBuf,
    /// Stage store; defaults to `<output_dir>/stages`.
    pub cache_dir: Option<PathBuf>,
    #[serde(rename = "match")]
    pub match_config: MatchConfig,
    pub roster: PopulationRoster,
    /// Share of each population in training and in the mixed column.
    /// Empty means uniform.
    pub mixture: Vec<f64>,
    pub corpus: CorpusConfig,
    pub sl: TrainConfig,
    pub rl: RlConfig,
    pub tom_corpus: TomCorpusConfig,
    pub identifier: IdentifierStage,
    pub transition: TransitionStage,
    pub tom: TomConfig,
    pub finetune: FinetuneStage,
    pub evaluation: EvaluationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifierStage {
    #[serde(flatten)]
    pub train: TrainConfig,
    /// Fresh dialogs for the held-out accuracy check.
    pub holdout_dialogs: usize,
    /// Opponent utterances seen before the accuracy is read off.
    pub accuracy_turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransitionStage {
    #[serde(flatten)]
    pub train: TrainConfig,
    /// Share of the ToM corpus used for the models the agents run on.
    pub data_fraction: f64,
    /// Reduced share used for the sample-efficiency comparison.
    pub reduced_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneStage {
    pub enabled: bool,
    pub mode: TomMode,
    #[serde(flatten)]
    pub config: FinetuneConfig,
    /// Dialogs in the before/after comparison.
    pub paired_episodes: usize,
    /// States in the critic-target variance comparison.
    pub variance_states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub managers: Vec<ManagerKind>,
    /// Dialogs in each single-population column.
    pub dialogs: usize,
    /// Dialogs in the mixed column, split by the mixture weights.
    pub mixed_dialogs: usize,
    pub cooperative: u8,
    pub competitive: u8,
    /// Swap the agent between buyer and seller on alternate dialogs.
    pub alternate_roles: bool,
    /// ToM decisions of this many dialogs per column go to `debug/`.
    pub debug_dialogs: usize,
}

fn desk_net(hidden: usize) -> NetConfig {
    NetConfig {
        hidden,
        layers: 1,
        head_hidden: hidden,
    }
}

impl Default for IdentifierStage {
    fn default() -> Self {
        IdentifierStage {
            train: TrainConfig {
                epochs: 10,
                net: desk_net(32),
                ..TrainConfig::default()
            },
            holdout_dialogs: 2000,
            accuracy_turns: 6,
        }
    }
}

impl Default for TransitionStage {
    fn default() -> Self {
        TransitionStage {
            train: TrainConfig {
                epochs: 20,
                net: desk_net(64),
                ..TrainConfig::default()
            },
            data_fraction: 1.0,
            reduced_fraction: 0.25,
        }
    }
}

impl Default for FinetuneStage {
    fn default() -> Self {
        FinetuneStage {
            enabled: true,
            mode: TomMode::Explicit,
            config: FinetuneConfig::default(),
            paired_episodes: 1000,
            variance_states: 20,
        }
    }
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            managers: ManagerKind::ALL.to_vec(),
            dialogs: 1000,
            mixed_dialogs: 4352,
            cooperative: 5,
            competitive: 6,
            alternate_roles: false,
            debug_dialogs: 5,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            output_dir: PathBuf::from("runs/default"),
            cache_dir: None,
            match_config: MatchConfig::default(),
            roster: default_roster(),
            mixture: Vec::new(),
            corpus: CorpusConfig { dialogs: 2000, seed: 0 },
            sl: TrainConfig {
                epochs: 8,
                net: desk_net(32),
                ..TrainConfig::default()
            },
            rl: RlConfig {
                episodes: 6000,
                eval_episodes: 140,
                net: desk_net(32),
                ..RlConfig::default()
            },
            tom_corpus: TomCorpusConfig {
                dialogs: 10000,
                epsilon: 0.3,
                seed: 0,
            },
            identifier: IdentifierStage::default(),
            transition: TransitionStage::default(),
            tom: TomConfig::default(),
            finetune: FinetuneStage::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses `text` as an overlay on [`ExperimentConfig::default`]: tables
    /// merge key by key, everything else replaces.
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let overlay: toml::Table = toml::from_str(text)?;
        let mut base = toml::Table::try_from(ExperimentConfig::default()).expect("default config serializes");
        merge(&mut base, overlay);
        let config: ExperimentConfig = base.try_into()?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&super::read_file(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Mixture weights, one per roster entry.
    pub fn weights(&self) -> Vec<f64> {
        if self.mixture.is_empty() {
            vec![1.0 / self.roster.len() as f64; self.roster.len()]
        } else {
            self.mixture.clone()
        }
    }

    /// Populations with positive weight: the training opponents.
    pub fn training_opponents(&self) -> Vec<u8> {
        self.roster
            .ids()
            .into_iter()
            .zip(self.weights())
            .filter(|(_, w)| *w > 0.0)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn cache_root(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("stages"))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.roster.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.match_config.scenario.validate()?;
        let weights = self.weights();
        if weights.len() != self.roster.len() {
            return bad(format!("{} mixture weights for {} populations", weights.len(), self.roster.len()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("mixture weights must be non-negative and sum to 1".into());
        }
        let counts = [
            ("corpus.dialogs", self.corpus.dialogs),
            ("rl.episodes", self.rl.episodes),
            ("rl.eval_episodes", self.rl.eval_episodes),
            ("tom_corpus.dialogs", self.tom_corpus.dialogs),
            ("identifier.holdout_dialogs", self.identifier.holdout_dialogs),
            ("finetune.episodes_per_iteration", self.finetune.config.episodes_per_iteration),
            ("finetune.paired_episodes", self.finetune.paired_episodes),
            ("evaluation.dialogs", self.evaluation.dialogs),
            ("evaluation.mixed_dialogs", self.evaluation.mixed_dialogs),
        ];
        for (name, n) in counts {
            if n == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, f) in [
            ("transition.data_fraction", self.transition.data_fraction),
            ("transition.reduced_fraction", self.transition.reduced_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("{name} must lie in (0, 1]"));
            }
        }
        for id in [self.evaluation.cooperative, self.evaluation.competitive] {
            if self.roster.get(id).is_none() {
                return bad(format!("population {id} is not in the roster"));
            }
        }
        if self.sl.net != self.rl.net {
            return bad("rl.net must match sl.net; the RL policy starts from the SL checkpoint".into());
        }
        if !(self.tom.beta > 0.0) {
            return bad("tom.beta must be positive".into());
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let config = ExperimentConfig::default();
        config.validate().unwrap();
        let back = ExperimentConfig::from_toml(&config.to_toml()).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_tables_fill_in_defaults() {
        let config = ExperimentConfig::from_toml("seed = 9\n[rl]\nepisodes = 10\n[transition]\nepochs = 3\n").unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.rl.episodes, 10);
        assert_eq!(config.rl.batch_size, RlConfig::default().batch_size);
        assert_eq!(config.rl.net, ExperimentConfig::default().rl.net);
        assert_eq!(config.transition.train.epochs, 3);
        assert_eq!(config.transition.reduced_fraction, 0.25);
    }

    #[test]
    fn rejects_bad_weights_and_counts() {
        let mut config = ExperimentConfig::default();
        config.mixture = vec![0.5; 7];
        assert!(config.validate().is_err());
        let mut config = ExperimentConfig::default();
        config.evaluation.dialogs = 0;
        assert!(config.validate().is_err());
        let mut config = ExperimentConfig::default();
        config.mixture = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5];
        config.validate().unwrap();
        assert_eq!(config.training_opponents(), vec![5, 6]);
    }
}
