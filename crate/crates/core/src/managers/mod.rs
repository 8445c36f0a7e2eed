//! Baseline dialog managers (supervised and actor-critic) and the rule guard
//! shared by every learned agent.

mod corpus;
mod guard;
mod nets;
mod rl;
mod sl;

pub use corpus::{generate_corpus, CorpusConfig};
pub use guard::{guard, GuardConfig, SL_ACCEPT_UTILITY};
pub use nets::{NetConfig, PolicyNet, PolicyOutput, ValueNet};
pub use rl::{
    evaluate_mean_reward, policy_gradient, train_rl, value, RlAgent, RlConfig, RlReport, Trajectory, TrajectoryStep,
};
pub use sl::{sequence_loss, sl_act, train_sl, SlAgent, SlReport, TrainConfig};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::NeuralError;
use crate::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManagerKind {
    SlRule,
    Rl,
    TomImplicit,
    TomExplicit,
}

impl ManagerKind {
    pub const ALL: [ManagerKind; 4] = [
        ManagerKind::SlRule,
        ManagerKind::Rl,
        ManagerKind::TomImplicit,
        ManagerKind::TomExplicit,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ManagerKind::SlRule => "SL+rule",
            ManagerKind::Rl => "RL",
            ManagerKind::TomImplicit => "ToM implicit",
            ManagerKind::TomExplicit => "ToM explicit",
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("training diverged: {0}")]
    Diverged(#[from] NeuralError),
    #[error(transparent)]
    Env(#[from] crate::environment::EnvError),
    #[error("{0}")]
    Invalid(String),
}

/// Draws an index with probability proportional to `weights`.
pub fn sample_index(weights: &[f64], rng: &mut SimRng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut draw = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last = i;
            if draw < *w {
                return i;
            }
            draw -= w;
        }
    }
    last
}
