use serde::{Deserialize, Serialize};

use crate::environment::{EnvError, Role};
use crate::generator::TemplateBank;
use crate::populations::{PopulationAgent, PopulationRoster};
use crate::rollout::{play, Episode, MatchConfig};
use crate::derive_seed;

/// Population-vs-population self-play used to bootstrap the SL manager.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub dialogs: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { dialogs: 5000, seed: 0 }
    }
}

/// Dialog `i` pairs a buyer and a seller drawn uniformly from the roster.
pub fn generate_corpus(
    roster: &PopulationRoster,
    config: &CorpusConfig,
    match_config: &MatchConfig,
    bank: &TemplateBank,
) -> Result<Vec<Episode>, EnvError> {
    let specs = &roster.populations;
    let mut match_config = match_config.clone();
    match_config.agent_role = Role::Buyer;
    (0..config.dialogs as u64)
        .map(|i| {
            let seed = derive_seed(config.seed, i);
            let pick = derive_seed(seed, 7);
            let buyer = PopulationAgent::new(specs[(pick % specs.len() as u64) as usize].clone());
            let seller = PopulationAgent::new(specs[((pick >> 32) % specs.len() as u64) as usize].clone());
            play(&buyer, &seller, &match_config, seed, bank)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{legal_responses, validate_act};
    use crate::populations::default_roster;

    #[test]
    fn self_play_corpus_is_protocol_valid() {
        let corpus = generate_corpus(
            &default_roster(),
            &CorpusConfig { dialogs: 300, seed: 4 },
            &MatchConfig::default(),
            TemplateBank::builtin(),
        )
        .unwrap();
        let mut pairs = std::collections::BTreeSet::new();
        for ep in &corpus {
            pairs.insert((ep.agent_name.clone(), ep.opponent_name.clone()));
            let mut previous = None;
            for e in &ep.state.history {
                validate_act(&e.act).unwrap();
                assert!(legal_responses(previous).unwrap().contains(e.act.intent));
                previous = Some(&e.act);
            }
        }
        assert!(pairs.len() > 30);
        let deals = corpus.iter().filter(|e| e.outcome.is_deal()).count();
        assert!(deals > 0 && deals < corpus.len());
    }
}
