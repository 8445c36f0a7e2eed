//! Rule-based opponent personalities.
//!
//! Each population concedes along its own price curve, accepts proposals
//! inside an acceptance band that widens as the dialog drags on, and
//! sprinkles population-specific style tokens into its utterances.
//! All curve arithmetic happens in own-utility units (`1` = own extreme).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{DialogState, Role};
use crate::ontology::{DialogAct, Intent, IntentSet};
use crate::rollout::Negotiator;
use crate::SimRng;

/// Number of opponent populations in the default roster.
pub const NUM_POPULATIONS: usize = 7;
pub const COOPERATIVE_ID: u8 = 5;
pub const COMPETITIVE_ID: u8 = 6;
pub const AGGRESSIVE_ID: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Cooperative,
    Competitive,
}

/// Style words injected into population utterances.
pub const COOPERATIVE_WORDS: [&str; 6] = ["great", "ok", "sure", "happy", "glad", "fair"];
pub const COMPETITIVE_WORDS: [&str; 6] =
    ["afraid", "unfortunately", "firm", "sorry", "honestly", "seriously"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StyleToken(pub String);

impl StyleToken {
    pub fn new(word: &str) -> Self {
        StyleToken(word.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Valence from the fixed lexicon; `None` for words outside it.
    pub fn valence(&self) -> Option<Valence> {
        valence_of(&self.0)
    }
}

pub fn valence_of(word: &str) -> Option<Valence> {
    if COOPERATIVE_WORDS.contains(&word) {
        Some(Valence::Cooperative)
    } else if COMPETITIVE_WORDS.contains(&word) {
        Some(Valence::Competitive)
    } else {
        None
    }
}

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("population config: {0}")]
    Invalid(String),
    #[error("reading population config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing population config: {0}")]
    Parse(#[from] toml::de::Error),
}

fn default_opening() -> f64 {
    1.0
}
fn default_accept_band() -> f64 {
    0.05
}
fn default_band_growth() -> f64 {
    0.15
}
fn default_chat_rate() -> f64 {
    0.3
}
fn default_tokens_per_utterance() -> usize {
    2
}

/// One opponent personality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub id: u8,
    #[serde(default)]
    pub name: String,
    /// Asking utility at turn 0.
    #[serde(default = "default_opening")]
    pub opening_utility: f64,
    /// Lowest own utility ever accepted.
    pub floor_utility: f64,
    pub slope: f64,
    pub convexity: f64,
    /// Acceptance band around the current asking utility at turn 0.
    #[serde(default = "default_accept_band")]
    pub accept_band: f64,
    /// Extra band width gained linearly by the end of the dialog.
    #[serde(default = "default_band_growth")]
    pub band_growth: f64,
    /// Probability of a non-price move when a counter would otherwise follow.
    #[serde(default = "default_chat_rate")]
    pub chat_rate: f64,
    #[serde(default = "default_tokens_per_utterance")]
    pub tokens_per_utterance: usize,
    pub token_weights: BTreeMap<String, f64>,
}

impl PopulationSpec {
    /// A spec whose token weights put `cooperative_share` of the mass on the
    /// cooperative lexicon, spread evenly within each valence.
    pub fn with_share(
        id: u8,
        name: &str,
        opening_utility: f64,
        floor_utility: f64,
        slope: f64,
        convexity: f64,
        cooperative_share: f64,
        tokens_per_utterance: usize,
    ) -> Self {
        let mut token_weights = BTreeMap::new();
        for w in COOPERATIVE_WORDS {
            token_weights.insert(w.to_string(), cooperative_share / COOPERATIVE_WORDS.len() as f64);
        }
        for w in COMPETITIVE_WORDS {
            token_weights.insert(
                w.to_string(),
                (1.0 - cooperative_share) / COMPETITIVE_WORDS.len() as f64,
            );
        }
        PopulationSpec {
            id,
            name: name.to_string(),
            opening_utility,
            floor_utility,
            slope,
            convexity,
            accept_band: default_accept_band(),
            band_growth: default_band_growth(),
            chat_rate: default_chat_rate(),
            tokens_per_utterance,
            token_weights,
        }
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        let bad = |m: String| Err(PopulationError::Invalid(m));
        if !(0.0..=1.0).contains(&self.floor_utility) {
            return bad(format!("population {}: floor_utility outside [0,1]", self.id));
        }
        if !(self.floor_utility..=1.0).contains(&self.opening_utility) {
            return bad(format!("population {}: opening_utility outside [floor,1]", self.id));
        }
        if !(self.slope >= 0.0 && self.slope.is_finite()) {
            return bad(format!("population {}: slope must be >= 0", self.id));
        }
        if !(self.convexity > 0.0 && self.convexity.is_finite()) {
            return bad(format!("population {}: convexity must be > 0", self.id));
        }
        if self.accept_band < 0.0 || self.band_growth < 0.0 {
            return bad(format!("population {}: negative acceptance band", self.id));
        }
        if !(0.0..=1.0).contains(&self.chat_rate) {
            return bad(format!("population {}: chat_rate outside [0,1]", self.id));
        }
        if self.tokens_per_utterance > 0 && self.token_weights.values().all(|w| *w <= 0.0) {
            return bad(format!("population {}: token weights are all zero", self.id));
        }
        for (word, w) in &self.token_weights {
            if valence_of(word).is_none() {
                return bad(format!("population {}: `{word}` is not a style word", self.id));
            }
            if !(*w >= 0.0 && w.is_finite()) {
                return bad(format!("population {}: bad weight for `{word}`", self.id));
            }
        }
        Ok(())
    }

    /// Expected share of cooperative-valence tokens.
    pub fn cooperative_share(&self) -> f64 {
        let total: f64 = self.token_weights.values().sum();
        let coop: f64 = self
            .token_weights
            .iter()
            .filter(|(w, _)| valence_of(w) == Some(Valence::Cooperative))
            .map(|(_, v)| v)
            .sum();
        if total > 0.0 {
            coop / total
        } else {
            0.0
        }
    }
}

/// The ordered set of opponent personalities in play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRoster {
    #[serde(rename = "population")]
    pub populations: Vec<PopulationSpec>,
}

impl Default for PopulationRoster {
    fn default() -> Self {
        default_roster()
    }
}

impl PopulationRoster {
    pub fn new(populations: Vec<PopulationSpec>) -> Result<Self, PopulationError> {
        let roster = PopulationRoster { populations };
        roster.validate()?;
        Ok(roster)
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        if self.populations.is_empty() {
            return Err(PopulationError::Invalid("roster is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for spec in &self.populations {
            spec.validate()?;
            if !seen.insert(spec.id) {
                return Err(PopulationError::Invalid(format!("duplicate id {}", spec.id)));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, PopulationError> {
        let roster: PopulationRoster = toml::from_str(text)?;
        roster.validate()?;
        Ok(roster)
    }

    pub fn load(path: &Path) -> Result<Self, PopulationError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("roster serializes")
    }

    pub fn get(&self, id: u8) -> Option<&PopulationSpec> {
        self.populations.iter().find(|p| p.id == id)
    }

    pub fn ids(&self) -> Vec<u8> {
        self.populations.iter().map(|p| p.id).collect()
    }

    pub fn len(&self) -> usize {
        self.populations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.populations.is_empty()
    }
}

/// The seven built-in personalities. Ids 1-4 interpolate opening, floor and
/// slope evenly between the aggressive (0) and cooperative (5) extremes with
/// alternating convexity; id 6 concedes quadratically from the listing price
/// towards a high floor.
pub fn default_roster() -> PopulationRoster {
    let aggressive_floor = 0.85;
    let cooperative_floor = 0.20;
    let cooperative_opening = 0.65;
    let convexities = [0.5, 1.0, 2.0, 0.5];
    let shares = [0.3, 0.5, 0.6, 0.75];
    let token_counts = [1, 2, 4, 3];
    let mut populations = vec![PopulationSpec::with_share(
        AGGRESSIVE_ID,
        "aggressive",
        1.0,
        aggressive_floor,
        0.0,
        1.0,
        0.1,
        3,
    )];
    for k in 1..=4u8 {
        let frac = f64::from(k) / 5.0;
        let i = usize::from(k - 1);
        populations.push(PopulationSpec::with_share(
            k,
            &format!("intermediate-{k}"),
            1.0 + frac * (cooperative_opening - 1.0),
            aggressive_floor + frac * (cooperative_floor - aggressive_floor),
            frac,
            convexities[i],
            shares[i],
            token_counts[i],
        ));
    }
    populations.push(PopulationSpec::with_share(
        COOPERATIVE_ID,
        "cooperative",
        cooperative_opening,
        cooperative_floor,
        1.0,
        1.0,
        0.9,
        2,
    ));
    populations.push(PopulationSpec::with_share(
        COMPETITIVE_ID,
        "competitive",
        1.0,
        0.55,
        0.6,
        2.0,
        0.2,
        2,
    ));
    PopulationRoster { populations }
}

/// Asking utility at `turn` of an `n`-turn dialog: the opening utility minus
/// `(opening - floor) * slope * (turn/n)^convexity`, clamped to
/// `[floor, opening]`.
pub fn concession_utility(spec: &PopulationSpec, turn: usize, n: usize) -> f64 {
    let frac = if n == 0 {
        1.0
    } else {
        (turn.min(n) as f64 / n as f64).powf(spec.convexity)
    };
    let range = spec.opening_utility - spec.floor_utility;
    (spec.opening_utility - range * frac * spec.slope).clamp(spec.floor_utility, spec.opening_utility)
}

/// Asking price on the normalized axis for a population playing `role`.
pub fn concession_price(spec: &PopulationSpec, role: Role, turn: usize, n: usize) -> f64 {
    role.price_for_utility(concession_utility(spec, turn, n))
}

/// Lowest own utility the population accepts at `turn`; never below the floor.
pub fn acceptance_threshold(spec: &PopulationSpec, turn: usize, n: usize) -> f64 {
    let frac = if n == 0 { 1.0 } else { turn.min(n) as f64 / n as f64 };
    let band = spec.accept_band + spec.band_growth * frac;
    (concession_utility(spec, turn, n) - band).max(spec.floor_utility)
}

/// Samples `tokens_per_utterance` style words according to the weights.
pub fn style_tokens(spec: &PopulationSpec, rng: &mut SimRng) -> Vec<StyleToken> {
    let total: f64 = spec.token_weights.values().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    (0..spec.tokens_per_utterance)
        .map(|_| {
            let mut draw = rng.gen::<f64>() * total;
            let mut chosen = None;
            for (word, w) in &spec.token_weights {
                if *w <= 0.0 {
                    continue;
                }
                chosen = Some(word);
                if draw < *w {
                    break;
                }
                draw -= w;
            }
            StyleToken::new(chosen.expect("positive weight exists"))
        })
        .collect()
}

/// Picks a non-price intent when a population decides to chat.
pub trait ChatIntentModel: Send + Sync {
    fn chat_intent(
        &self,
        state: &DialogState,
        role: Role,
        allowed: IntentSet,
        rng: &mut SimRng,
    ) -> Intent;
}

/// Non-price intents a population may use mid-dialog.
pub fn chat_intents() -> IntentSet {
    IntentSet::of(&[
        Intent::Inquire,
        Intent::Inform,
        Intent::Confirm,
        Intent::Affirm,
        Intent::Deny,
        Intent::CounterNoprice,
    ])
}

const SCRIPTED_CHAT: [(Intent, f64); 6] = [
    (Intent::Inform, 0.3),
    (Intent::Inquire, 0.15),
    (Intent::Confirm, 0.1),
    (Intent::Affirm, 0.15),
    (Intent::Deny, 0.1),
    (Intent::CounterNoprice, 0.2),
];

fn scripted_chat(allowed: IntentSet, rng: &mut SimRng) -> Intent {
    let options: Vec<(Intent, f64)> = SCRIPTED_CHAT
        .iter()
        .copied()
        .filter(|(i, _)| allowed.contains(*i))
        .collect();
    let total: f64 = options.iter().map(|(_, w)| w).sum();
    let mut draw = rng.gen::<f64>() * total;
    for (intent, w) in &options {
        if draw < *w {
            return *intent;
        }
        draw -= w;
    }
    options.last().map(|(i, _)| *i).unwrap_or(Intent::Inform)
}

/// A scripted opponent following one [`PopulationSpec`].
#[derive(Clone)]
pub struct PopulationAgent {
    pub spec: PopulationSpec,
    chat_model: Option<Arc<dyn ChatIntentModel>>,
}

impl std::fmt::Debug for PopulationAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PopulationAgent")
            .field("spec", &self.spec)
            .field("chat_model", &self.chat_model.is_some())
            .finish()
    }
}

impl PopulationAgent {
    pub fn new(spec: PopulationSpec) -> Self {
        PopulationAgent {
            spec,
            chat_model: None,
        }
    }

    /// Lets a learned manager choose the non-price intents.
    pub fn with_chat_model(mut self, model: Arc<dyn ChatIntentModel>) -> Self {
        self.chat_model = Some(model);
        self
    }

    fn chat(&self, state: &DialogState, role: Role, allowed: IntentSet, rng: &mut SimRng) -> Intent {
        match &self.chat_model {
            Some(model) => {
                let intent = model.chat_intent(state, role, allowed, rng);
                if allowed.contains(intent) {
                    intent
                } else {
                    scripted_chat(allowed, rng)
                }
            }
            None => scripted_chat(allowed, rng),
        }
    }
}

/// One scripted move of population `spec` playing `role`.
pub fn opponent_act(
    agent: &PopulationAgent,
    state: &DialogState,
    role: Role,
    rng: &mut SimRng,
) -> DialogAct {
    let spec = &agent.spec;
    let t = state.turn_index();
    let n = state.max_turns;
    let threshold = acceptance_threshold(spec, t, n);

    if let Some(last) = state.last_act() {
        if last.intent == Intent::Offer {
            let price = last.price.expect("offers are priced");
            return if role.utility(price) >= threshold {
                DialogAct::bare(Intent::Accept)
            } else {
                DialogAct::bare(Intent::Reject)
            };
        }
    }

    let ask = concession_price(spec, role, t, n);
    let other = role.other();

    // Standing proposal from the other side inside the band: close on it.
    if let Some(theirs) = state.last_price_of(other) {
        if role.utility(theirs) >= threshold {
            let already_agreed = state
                .history
                .iter()
                .rev()
                .find(|e| e.agent == role)
                .is_some_and(|e| e.act.intent == Intent::Agree);
            return if already_agreed || rng.gen::<f64>() < 0.7 {
                DialogAct::priced(Intent::Offer, theirs)
            } else {
                DialogAct::priced(Intent::Agree, theirs)
            };
        }
    }

    // Last turn whose offer can still be answered.
    if t + 2 <= n && t + 4 > n {
        return DialogAct::priced(Intent::Offer, ask);
    }

    let own_turns = state.history.iter().filter(|e| e.agent == role).count();
    if own_turns == 0 {
        return match state.last_act().map(|a| a.intent) {
            None | Some(Intent::Greet) => DialogAct::bare(Intent::Greet),
            _ if rng.gen::<f64>() < 0.5 => DialogAct::bare(Intent::Inform),
            _ => DialogAct::bare(Intent::Greet),
        };
    }

    let has_priced = state.last_price_of(role).is_some();
    if let Some(theirs) = state.last_price_of(other) {
        if role.utility(theirs) < spec.floor_utility - 0.3 && rng.gen::<f64>() < 0.1 {
            return DialogAct::priced(Intent::Disagree, ask);
        }
    }
    if rng.gen::<f64>() < spec.chat_rate {
        let intent = agent.chat(state, role, chat_intents(), rng);
        return DialogAct::bare(intent);
    }
    if has_priced {
        DialogAct::priced(Intent::Counter, ask)
    } else {
        DialogAct::priced(Intent::Propose, ask)
    }
}

impl Negotiator for PopulationAgent {
    fn name(&self) -> String {
        format!("population-{}", self.spec.id)
    }

    fn act(&self, state: &DialogState, role: Role, rng: &mut SimRng) -> DialogAct {
        opponent_act(self, state, role, rng)
    }

    fn style_tokens(&self, rng: &mut SimRng) -> Vec<StyleToken> {
        style_tokens(&self.spec, rng)
    }

    fn population_id(&self) -> Option<u8> {
        Some(self.spec.id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{Scenario, DEFAULT_MAX_TURNS};
    use crate::generator::Utterance;
    use rand::SeedableRng;

    fn roster() -> PopulationRoster {
        default_roster()
    }

    fn state_with(moves: &[(Role, DialogAct)]) -> DialogState {
        let scenario = Scenario::new(3, 50.0, 38.0, vec![]).unwrap();
        let scale = scenario.scale();
        let first = moves.first().map(|m| m.0).unwrap_or(Role::Buyer);
        let mut state = DialogState::new(scenario, DEFAULT_MAX_TURNS, first);
        for (i, (role, act)) in moves.iter().enumerate() {
            state.push(*role, *act, Utterance::silent(act, &scale, i as f64 / 20.0)).unwrap();
        }
        state
    }

    /// Alternating filler moves so that it is the seller's turn at `turn`.
    fn padded(turn: usize, last: DialogAct) -> DialogState {
        let mut moves = Vec::new();
        let first = if turn % 2 == 0 { Role::Seller } else { Role::Buyer };
        let mut role = first;
        for _ in 0..turn.saturating_sub(1) {
            moves.push((role, DialogAct::bare(Intent::Inform)));
            role = role.other();
        }
        moves.push((role, last));
        state_with(&moves)
    }

    #[test]
    fn default_roster_is_valid_and_complete() {
        let r = roster();
        r.validate().unwrap();
        assert_eq!(r.ids(), vec![0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(r.get(0).unwrap().slope, 0.0);
    }

    #[test]
    fn roster_round_trips_through_toml() {
        let r = roster();
        let back = PopulationRoster::from_toml(&r.to_toml()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn bad_config_is_rejected() {
        let mut r = roster();
        r.populations[1].token_weights.insert("banana".into(), 1.0);
        assert!(r.validate().is_err());
        let mut r = roster();
        r.populations[2].id = 1;
        assert!(r.validate().is_err());
    }

    #[test]
    fn aggressive_never_moves() {
        let spec = roster().get(AGGRESSIVE_ID).unwrap().clone();
        for t in 0..=20 {
            assert_eq!(concession_utility(&spec, t, 20), 1.0);
            assert_eq!(concession_price(&spec, Role::Seller, t, 20), 1.0);
        }
    }

    #[test]
    fn cooperative_passes_midpoint_by_the_end() {
        let spec = roster().get(COOPERATIVE_ID).unwrap().clone();
        assert!(concession_price(&spec, Role::Seller, 20, 20) <= 0.5);
    }

    #[test]
    fn curves_are_monotone_for_every_population() {
        for spec in &roster().populations {
            for t in 0..20 {
                let now = concession_price(spec, Role::Seller, t, 20);
                let next = concession_price(spec, Role::Seller, t + 1, 20);
                assert!(next <= now + 1e-15, "population {} at {t}", spec.id);
                assert!(next >= spec.floor_utility - 1e-15);
            }
        }
    }

    #[test]
    fn curve_ordering_cooperative_competitive_aggressive() {
        let r = roster();
        let conceded = |id: u8, t| 1.0 - concession_utility(r.get(id).unwrap(), t, 20);
        for t in 0..=20 {
            assert!(conceded(COOPERATIVE_ID, t) >= conceded(COMPETITIVE_ID, t));
            assert!(conceded(COMPETITIVE_ID, t) >= conceded(AGGRESSIVE_ID, t));
            assert_eq!(conceded(AGGRESSIVE_ID, t), 0.0);
        }
    }

    #[test]
    fn acceptance_never_below_floor() {
        for spec in &roster().populations {
            for t in 0..=20 {
                assert!(acceptance_threshold(spec, t, 20) >= spec.floor_utility);
            }
            let early = acceptance_threshold(spec, 2, 20);
            let late = acceptance_threshold(spec, 18, 20);
            assert!(late <= early + 1e-12);
        }
    }

    #[test]
    fn cooperative_closes_on_midpoint_proposal() {
        let agent = PopulationAgent::new(roster().get(COOPERATIVE_ID).unwrap().clone());
        let state = padded(6, DialogAct::priced(Intent::Propose, 0.5));
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..20 {
            let act = agent.act(&state, Role::Seller, &mut rng);
            assert!(matches!(act.intent, Intent::Offer | Intent::Agree), "{act}");
            assert_eq!(act.price, Some(0.5));
        }
    }

    #[test]
    fn aggressive_counters_at_listing() {
        let agent = PopulationAgent::new(roster().get(AGGRESSIVE_ID).unwrap().clone());
        let mut rng = SimRng::seed_from_u64(2);
        for turn in [3, 5, 9, 13] {
            let state = padded(turn, DialogAct::priced(Intent::Counter, 0.6));
            for _ in 0..20 {
                let act = agent.act(&state, Role::Seller, &mut rng);
                if let Some(p) = act.price {
                    assert_eq!(p, 1.0, "turn {turn}: {act}");
                }
                assert_ne!(act.intent, Intent::Agree);
            }
        }
    }

    #[test]
    fn competitive_counters_above_midpoint_early() {
        let agent = PopulationAgent::new(roster().get(COMPETITIVE_ID).unwrap().clone());
        let state = padded(3, DialogAct::priced(Intent::Propose, 0.0));
        let mut rng = SimRng::seed_from_u64(3);
        let mut priced = 0;
        for _ in 0..50 {
            let act = agent.act(&state, Role::Seller, &mut rng);
            if let Some(p) = act.price {
                priced += 1;
                assert!(p > 0.5, "{act}");
            }
        }
        assert!(priced > 0);
    }

    #[test]
    fn offers_get_accept_or_reject() {
        let spec = roster().get(COOPERATIVE_ID).unwrap().clone();
        let agent = PopulationAgent::new(spec.clone());
        let mut rng = SimRng::seed_from_u64(4);
        let good = padded(5, DialogAct::priced(Intent::Offer, 0.95));
        assert_eq!(agent.act(&good, Role::Seller, &mut rng).intent, Intent::Accept);
        let bad = padded(5, DialogAct::priced(Intent::Offer, 0.05));
        assert_eq!(agent.act(&bad, Role::Seller, &mut rng).intent, Intent::Reject);
    }

    #[test]
    fn cooperative_tokens_skew_cooperative() {
        let spec = roster().get(COOPERATIVE_ID).unwrap().clone();
        let mut rng = SimRng::seed_from_u64(5);
        let (mut coop, mut comp) = (0, 0);
        for _ in 0..500 {
            for token in style_tokens(&spec, &mut rng) {
                match token.as_str() {
                    "great" | "ok" => coop += 1,
                    "afraid" | "unfortunately" => comp += 1,
                    _ => {}
                }
            }
        }
        assert!(coop > comp, "{coop} vs {comp}");
    }

    #[test]
    fn aggressive_tokens_skew_competitive() {
        let spec = roster().get(AGGRESSIVE_ID).unwrap().clone();
        let mut rng = SimRng::seed_from_u64(6);
        let tokens: Vec<_> = (0..300).flat_map(|_| style_tokens(&spec, &mut rng)).collect();
        let comp = tokens
            .iter()
            .filter(|t| t.valence() == Some(Valence::Competitive))
            .count();
        assert!(comp * 2 > tokens.len());
    }

    #[test]
    fn single_token_weights_are_deterministic() {
        let mut spec = roster().get(2).unwrap().clone();
        spec.token_weights = BTreeMap::from([("firm".to_string(), 1.0)]);
        let mut rng = SimRng::seed_from_u64(7);
        for _ in 0..50 {
            for t in style_tokens(&spec, &mut rng) {
                assert_eq!(t.as_str(), "firm");
            }
        }
    }

    #[test]
    fn lexicons_are_disjoint() {
        for w in COOPERATIVE_WORDS {
            assert!(!COMPETITIVE_WORDS.contains(&w));
        }
    }
}
