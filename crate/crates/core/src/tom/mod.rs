//! First-order theory-of-mind policies: opponent-type identification,
//! opponent transition models, one-step lookahead scoring, Boltzmann
//! normalisation and combination with the RL prior.

mod agent;
mod corpus;
mod finetune;
mod identifier;
mod scoring;
mod transition;

pub use agent::{candidate_acts, candidate_intents, policy_prior, Decision, DecisionRecord, ModelLookahead, TomAgent, TomModels};
pub use corpus::{generate_tom_corpus, EpsilonAgent, TomCorpusConfig};
pub(crate) use finetune::prefix_state;
pub use finetune::{
    finetune_tom, lookahead_target, lookahead_target_sample, rollout_return, sample_variance, target_variances,
    FinetuneConfig, FinetuneReport,
};
pub use identifier::{identifier_accuracy, identifier_loss, train_identifier, IdentifierNet, IdentifierReport};
pub use scoring::{
    boltzmann, combine_prior, tom_score, tom_score_monte_carlo, Lookahead, PolicyDistribution,
};
pub use transition::{
    episode_transition_loss, train_transition, Conditioning, ResponseDistribution, TransitionNet, TransitionReport, TomMode,
};

use serde::{Deserialize, Serialize};

use crate::populations::NUM_POPULATIONS;

/// Probability vector over population ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDistribution(pub Vec<f64>);

impl TypeDistribution {
    pub fn uniform(n: usize) -> Self {
        TypeDistribution(vec![1.0 / n as f64; n])
    }

    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Whether `label` is among the `k` most probable ids.
    pub fn in_top(&self, label: usize, k: usize) -> bool {
        let p = self.0[label];
        self.0.iter().filter(|q| **q > p).count() < k
    }
}

impl Default for TypeDistribution {
    fn default() -> Self {
        TypeDistribution::uniform(NUM_POPULATIONS)
    }
}

/// How successor values are aggregated over the opponent's predicted moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Expectation under the transition model.
    #[default]
    Expected,
    /// Worst successor in the model's support.
    Competitive,
    /// Best successor in the model's support.
    Cooperative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TomConfig {
    /// Boltzmann temperature.
    pub beta: f64,
    pub variant: Variant,
    /// Utterances enumerated per candidate act.
    pub utterance_samples: usize,
    /// Opponent moves below this probability are dropped from the support.
    pub support_threshold: f64,
}

impl Default for TomConfig {
    fn default() -> Self {
        TomConfig {
            beta: 0.05,
            variant: Variant::Expected,
            utterance_samples: 3,
            support_threshold: 1e-3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_membership() {
        let z = TypeDistribution(vec![0.1, 0.5, 0.2, 0.2]);
        assert_eq!(z.argmax(), 1);
        assert!(z.in_top(1, 1));
        assert!(!z.in_top(2, 1));
        assert!(z.in_top(2, 2));
        assert!(z.in_top(0, 4));
        assert!(!z.in_top(0, 3));
    }
}
