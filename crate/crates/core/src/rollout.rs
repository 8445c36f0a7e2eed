//! Playing full dialogs between two negotiators.

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};

use crate::environment::{
    metrics, sample_scenario, DialogState, EnvError, HistoryEntry, MetricsRecord, Outcome, Role,
    Scenario, ScenarioConfig, DEFAULT_MAX_TURNS,
};
use crate::generator::{GenerationMode, TemplateBank, Utterance};
use crate::ontology::DialogAct;
use crate::populations::StyleToken;
use crate::SimRng;

/// Anything that can take a turn in a dialog.
pub trait Negotiator: Send + Sync {
    fn name(&self) -> String;

    fn act(&self, state: &DialogState, role: Role, rng: &mut SimRng) -> DialogAct;

    /// Style tokens injected into this negotiator's next utterance.
    fn style_tokens(&self, _rng: &mut SimRng) -> Vec<StyleToken> {
        Vec::new()
    }

    /// Ground-truth personality, for scripted opponents.
    fn population_id(&self) -> Option<u8> {
        None
    }
}

/// A finished dialog with everything needed for training and metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub state: DialogState,
    /// Role of the negotiator under study.
    pub agent: Role,
    pub agent_name: String,
    pub opponent_name: String,
    pub opponent_population: Option<u8>,
    pub outcome: Outcome,
    pub metrics: MetricsRecord,
}

/// Plays `agent` (in `agent_role`) against `opponent` until the dialog ends.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    scenario: Scenario,
    max_turns: usize,
    first_mover: Role,
    agent: &dyn Negotiator,
    agent_role: Role,
    opponent: &dyn Negotiator,
    bank: &TemplateBank,
    mode: GenerationMode,
    rng: &mut SimRng,
) -> Result<Episode, EnvError> {
    let mut state = DialogState::new(scenario, max_turns, first_mover);
    let outcome = continue_dialog(&mut state, agent, agent_role, opponent, bank, mode, rng)?;
    let metrics = metrics(&outcome, &state.scenario, agent_role);
    Ok(Episode {
        state,
        agent: agent_role,
        agent_name: agent.name(),
        opponent_name: opponent.name(),
        opponent_population: opponent.population_id(),
        outcome,
        metrics,
    })
}

/// Plays `state` forward until the dialog ends.
pub fn continue_dialog(
    state: &mut DialogState,
    agent: &dyn Negotiator,
    agent_role: Role,
    opponent: &dyn Negotiator,
    bank: &TemplateBank,
    mode: GenerationMode,
    rng: &mut SimRng,
) -> Result<Outcome, EnvError> {
    if let Some(outcome) = state.outcome {
        return Ok(outcome);
    }
    loop {
        let role = state.whose_turn();
        let who: &dyn Negotiator = if role == agent_role { agent } else { opponent };
        let act = who.act(state, role, rng);
        let tokens = if act.intent.is_silent() {
            Vec::new()
        } else {
            who.style_tokens(rng)
        };
        let utterance = bank.generate(state, &act, tokens, rng, mode);
        if let Some(outcome) = state.push(role, act, utterance)? {
            return Ok(outcome);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FirstMover {
    Buyer,
    Seller,
    #[default]
    Random,
}

/// Everything about a dialog except the two negotiators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    /// Role played by the negotiator under study.
    #[serde(default = "default_agent_role")]
    pub agent_role: Role,
    #[serde(default)]
    pub first_mover: FirstMover,
    #[serde(default)]
    pub generation: GenerationMode,
}

fn default_max_turns() -> usize {
    DEFAULT_MAX_TURNS
}

fn default_agent_role() -> Role {
    Role::Buyer
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            scenario: ScenarioConfig::default(),
            max_turns: DEFAULT_MAX_TURNS,
            agent_role: Role::Buyer,
            first_mover: FirstMover::Random,
            generation: GenerationMode::Stochastic,
        }
    }
}

/// Plays one seeded dialog; the scenario, turn order and every random draw
/// derive from `seed`.
pub fn play(
    agent: &dyn Negotiator,
    opponent: &dyn Negotiator,
    config: &MatchConfig,
    seed: u64,
    bank: &TemplateBank,
) -> Result<Episode, EnvError> {
    let scenario = sample_scenario(crate::derive_seed(seed, 0), &config.scenario)?;
    let mut rng = SimRng::seed_from_u64(crate::derive_seed(seed, 1));
    let first = match config.first_mover {
        FirstMover::Buyer => Role::Buyer,
        FirstMover::Seller => Role::Seller,
        FirstMover::Random => {
            if rng.gen::<bool>() {
                Role::Buyer
            } else {
                Role::Seller
            }
        }
    };
    run_episode(
        scenario,
        config.max_turns,
        first,
        agent,
        config.agent_role,
        opponent,
        bank,
        config.generation,
        &mut rng,
    )
}

/// One line of a transcript log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub agent: Role,
    pub act: String,
    /// Exact price; `act` shows it rounded.
    pub price: Option<f64>,
    pub template_id: Option<u32>,
    pub style_tokens: Vec<String>,
}

/// Compact serialized dialog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub episode: u64,
    pub scenario: Scenario,
    pub max_turns: usize,
    pub first_mover: Role,
    pub agent: Role,
    pub agent_name: String,
    pub opponent_name: String,
    pub opponent_population: Option<u8>,
    pub turns: Vec<TurnRecord>,
    pub outcome: Outcome,
    pub metrics: MetricsRecord,
}

impl Transcript {
    pub fn from_episode(index: u64, episode: &Episode) -> Self {
        Transcript {
            episode: index,
            scenario: episode.state.scenario.clone(),
            max_turns: episode.state.max_turns,
            first_mover: episode.state.first_mover,
            agent: episode.agent,
            agent_name: episode.agent_name.clone(),
            opponent_name: episode.opponent_name.clone(),
            opponent_population: episode.opponent_population,
            turns: episode
                .state
                .history
                .iter()
                .map(|e| TurnRecord {
                    agent: e.agent,
                    act: e.act.token(),
                    price: e.act.price,
                    template_id: e.utterance.template_id,
                    style_tokens: e.utterance.style_tokens.iter().map(|t| t.as_str().to_string()).collect(),
                })
                .collect(),
            outcome: episode.outcome,
            metrics: episode.metrics,
        }
    }

    /// Rebuilds the full episode, re-rendering utterance text from the bank.
    pub fn to_episode(&self, bank: &TemplateBank) -> Result<Episode, EnvError> {
        let mut state = DialogState::new(self.scenario.clone(), self.max_turns, self.first_mover);
        let scale = self.scenario.scale();
        for turn in &self.turns {
            let parsed: DialogAct = turn.act.parse()?;
            let act = DialogAct::checked(parsed.intent, turn.price)?;
            let position = crate::generator::position_of(state.turn_index(), self.max_turns);
            let tokens: Vec<StyleToken> = turn.style_tokens.iter().map(|w| StyleToken::new(w)).collect();
            let utterance = match turn.template_id.and_then(|id| bank.get(act.intent, id)) {
                Some(template) => bank.render(&act, template, &scale, tokens, position),
                None => Utterance::silent(&act, &scale, position),
            };
            state.push(turn.agent, act, utterance)?;
        }
        Ok(Episode {
            state,
            agent: self.agent,
            agent_name: self.agent_name.clone(),
            opponent_name: self.opponent_name.clone(),
            opponent_population: self.opponent_population,
            outcome: self.outcome,
            metrics: self.metrics,
        })
    }
}

/// Entries of `state` up to (excluding) index `t`.
pub fn prefix(state: &DialogState, t: usize) -> &[HistoryEntry] {
    &state.history[..t.min(state.history.len())]
}
