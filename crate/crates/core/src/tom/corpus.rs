use rand::seq::IteratorRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::environment::{DialogState, Role};
use crate::generator::TemplateBank;
use crate::managers::TrainError;
use crate::ontology::{legal_responses, DialogAct};
use crate::populations::{PopulationAgent, PopulationRoster};
use crate::rollout::{play, Episode, MatchConfig, Negotiator};
use crate::SimRng;

/// Wraps a negotiator so that with probability `epsilon` it plays a uniformly
/// random legal act instead, widening the states the opponent model sees.
pub struct EpsilonAgent<'a> {
    pub inner: &'a dyn Negotiator,
    pub epsilon: f64,
}

impl Negotiator for EpsilonAgent<'_> {
    fn name(&self) -> String {
        format!("{}+eps", self.inner.name())
    }

    fn act(&self, state: &DialogState, role: Role, rng: &mut SimRng) -> DialogAct {
        if rng.gen::<f64>() >= self.epsilon {
            return self.inner.act(state, role, rng);
        }
        let legal = legal_responses(state.last_act()).expect("valid state");
        let intent = legal.iter().choose(rng).expect("some act is always legal");
        if intent.requires_price() {
            DialogAct::priced(intent, rng.gen_range(0.0..=1.0))
        } else {
            DialogAct::bare(intent)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TomCorpusConfig {
    pub dialogs: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TomCorpusConfig {
    fn default() -> Self {
        TomCorpusConfig {
            dialogs: 3000,
            epsilon: 0.2,
            seed: 0,
        }
    }
}

/// Dialogs of `agent` (with exploration) against opponents drawn uniformly
/// from `opponents`, labelled with the opponent's population.
pub fn generate_tom_corpus(
    agent: &dyn Negotiator,
    roster: &PopulationRoster,
    opponents: &[u8],
    match_config: &MatchConfig,
    config: &TomCorpusConfig,
    bank: &TemplateBank,
) -> Result<Vec<Episode>, TrainError> {
    if opponents.is_empty() {
        return Err(TrainError::Invalid("no opponents".into()));
    }
    let explorer = EpsilonAgent {
        inner: agent,
        epsilon: config.epsilon,
    };
    (0..config.dialogs as u64)
        .map(|i| {
            let seed = derive_seed(config.seed, i);
            let id = opponents[(derive_seed(seed, 5) % opponents.len() as u64) as usize];
            let spec = roster
                .get(id)
                .ok_or_else(|| TrainError::Invalid(format!("unknown population {id}")))?;
            let opp = PopulationAgent::new(spec.clone());
            Ok(play(&explorer, &opp, match_config, seed, bank)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::managers::{NetConfig, PolicyNet, RlAgent};
    use crate::populations::default_roster;
    use rand::SeedableRng;
    use std::sync::Arc;

    #[test]
    fn corpus_is_labelled_and_covers_opponents() {
        let mut rng = SimRng::seed_from_u64(0);
        let cfg = NetConfig {
            hidden: 4,
            layers: 1,
            head_hidden: 4,
        };
        let agent = RlAgent::new(Arc::new(PolicyNet::new(&cfg, &mut rng)), 0.1);
        let corpus = generate_tom_corpus(
            &agent,
            &default_roster(),
            &[0, 1, 2, 3, 4, 5, 6],
            &MatchConfig::default(),
            &TomCorpusConfig {
                dialogs: 200,
                epsilon: 0.5,
                seed: 1,
            },
            TemplateBank::builtin(),
        )
        .unwrap();
        let mut seen = [false; 7];
        for ep in &corpus {
            seen[ep.opponent_population.unwrap() as usize] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }
}
