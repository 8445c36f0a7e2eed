use std::cell::RefCell;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::scoring::{boltzmann, combine_prior, Lookahead};
use super::{Conditioning, IdentifierNet, ResponseDistribution, TomConfig, TomMode, TransitionNet, Variant};
use crate::environment::{resolve_outcome, reward, DialogState, Role};
use crate::features::{act_sparse, grid_price, history_features, last_style_of, ACT_DIM, PRICE, PRICE_GRID};
use crate::generator::{position_of, TemplateBank, Utterance};
use crate::managers::{guard, sample_index, GuardConfig, PolicyNet, ValueNet};
use crate::ontology::{legal_responses, DialogAct, Intent};
use crate::rollout::Negotiator;
use crate::SimRng;

/// Everything a ToM manager needs besides its configuration.
#[derive(Debug, Clone)]
pub struct TomModels {
    pub policy: Arc<PolicyNet>,
    pub value: Arc<ValueNet>,
    pub transition: Arc<TransitionNet>,
    /// Required when the transition model is explicit.
    pub identifier: Option<Arc<IdentifierNet>>,
}

impl TomModels {
    pub fn mode(&self) -> TomMode {
        self.transition.mode
    }

    pub fn condition(&self, state: &DialogState, role: Role) -> Conditioning {
        match self.mode() {
            TomMode::Implicit => Conditioning::Style(last_style_of(&state.history, role.other())),
            TomMode::Explicit => Conditioning::Types(
                self.identifier
                    .as_ref()
                    .map(|id| id.identify(state, role))
                    .unwrap_or_default(),
            ),
        }
    }
}

/// One-step lookahead from a concrete state using the learned opponent
/// model and critic. Encoders run once; each candidate and reply only adds
/// a few sparse columns to precomputed first-layer activations.
pub struct ModelLookahead<'a> {
    state: &'a DialogState,
    role: Role,
    value: &'a ValueNet,
    transition: &'a TransitionNet,
    bank: &'a TemplateBank,
    utterance_samples: usize,
    threshold: f64,
    /// Weight of the price-gap penalty added to non-terminal successors.
    gap_penalty: f64,
    value_base: Vec<f64>,
    /// Critic first-layer contribution of a reply with each intent, price aside.
    reply_bases: Vec<Vec<f64>>,
    /// Critic first-layer column for the reply price.
    reply_price: Vec<f64>,
    transition_base: Vec<f64>,
    cache: RefCell<Option<(DialogAct, ResponseDistribution)>>,
    own_cache: RefCell<Option<(DialogAct, Vec<f64>)>>,
}

impl<'a> ModelLookahead<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state: &'a DialogState,
        role: Role,
        value: &'a ValueNet,
        transition: &'a TransitionNet,
        condition: &Conditioning,
        bank: &'a TemplateBank,
        config: &TomConfig,
        gap_penalty: f64,
    ) -> Self {
        let feats = history_features(&state.history, role);
        let first = &value.head.layers[0];
        let mut value_base = first.b.value.data.clone();
        first.w.value.matvec_cols_add(0, &value.encoder.encode(&feats), &mut value_base);
        let transition_base = transition.base_input(&transition.encoder.encode(&feats), &condition.to_vec());
        let h = value.hidden();
        let column = |c: usize| -> Vec<f64> {
            let mut v = vec![0.0; first.output_dim()];
            first.w.value.add_column(c, 1.0, &mut v);
            v
        };
        let reply_position = position_of(state.history.len() + 1, state.max_turns);
        let reply_bases = Intent::ALL
            .iter()
            .map(|&intent| {
                let probe = if intent.requires_price() { DialogAct::priced(intent, 0.0) } else { DialogAct::bare(intent) };
                let mut v = vec![0.0; first.output_dim()];
                for (i, x) in act_sparse(role.other(), &probe, reply_position, role) {
                    if i != PRICE {
                        first.w.value.add_column(h + ACT_DIM + i, x, &mut v);
                    }
                }
                v
            })
            .collect();
        let reply_price = column(h + ACT_DIM + PRICE);
        ModelLookahead {
            state,
            role,
            value,
            transition,
            bank,
            utterance_samples: config.utterance_samples,
            threshold: config.support_threshold,
            gap_penalty,
            value_base,
            reply_bases,
            reply_price,
            transition_base,
            cache: RefCell::new(None),
            own_cache: RefCell::new(None),
        }
    }

    fn t(&self) -> usize {
        self.state.history.len()
    }

    fn response_distribution(&self, act: &DialogAct, position: f64) -> ResponseDistribution {
        if let Some((a, d)) = self.cache.borrow().as_ref() {
            if a == act {
                return d.clone();
            }
        }
        let own = act_sparse(self.role, act, position, self.role);
        let d = self.transition.predict_from_base(&self.transition_base, &own, act, self.role, self.threshold);
        *self.cache.borrow_mut() = Some((*act, d.clone()));
        d
    }

    /// Critic first-layer pre-activation of the successor after `act`,
    /// reply aside.
    fn own_input(&self, act: &DialogAct, position: f64) -> Vec<f64> {
        if let Some((a, v)) = self.own_cache.borrow().as_ref() {
            if a == act {
                return v.clone();
            }
        }
        let w = &self.value.head.layers[0].w.value;
        let h = self.value.hidden();
        let mut x = self.value_base.clone();
        for (i, v) in act_sparse(self.role, act, position, self.role) {
            w.add_column(h + i, v, &mut x);
        }
        *self.own_cache.borrow_mut() = Some((*act, x.clone()));
        x
    }

    fn value_after(&self, act: &DialogAct, position: f64, response: &DialogAct) -> f64 {
        let own = self.own_input(act, position);
        self.value_with(&own, act, response)
    }

    /// Shaped successor value given the critic input [`Self::own_input`].
    fn value_with(&self, own: &[f64], act: &DialogAct, response: &DialogAct) -> f64 {
        let length = self.t() + 2;
        if let Some(outcome) = resolve_outcome(Some(act), response, length, self.state.max_turns) {
            return reward(&outcome, self.role);
        }
        let base = &self.reply_bases[response.intent.index()];
        let u = response.price.map_or(0.0, |p| self.role.utility(p));
        let layers = &self.value.head.layers;
        let v = if layers.len() == 2 {
            let out = &layers[1];
            let act_fn = layers[0].activation;
            let w2 = out.w.value.row(0);
            let mut total = out.b.value.data[0];
            for j in 0..own.len() {
                total += w2[j] * act_fn.apply(own[j] + base[j] + u * self.reply_price[j]);
            }
            total
        } else {
            let x: Vec<f64> = (0..own.len()).map(|j| own[j] + base[j] + u * self.reply_price[j]).collect();
            self.value.head.forward_from_first_linear(&x)[0]
        };
        v - self.gap_penalty * self.gap(act, response)
    }

    /// Distance between the two sides' latest prices after `act` and `response`.
    fn gap(&self, act: &DialogAct, response: &DialogAct) -> f64 {
        if self.gap_penalty == 0.0 {
            return 0.0;
        }
        let own = act.price.or_else(|| self.state.last_price_of(self.role));
        let theirs = response.price.or_else(|| self.state.last_price_of(self.role.other()));
        match (own, theirs) {
            (Some(a), Some(b)) => (a - b).abs(),
            _ => 0.0,
        }
    }

    /// Same value as [`super::tom_score`] on this lookahead. Every utterance
    /// of an act shares its features, so replies and successor values are
    /// computed once per act.
    pub fn score(&self, act: &DialogAct, variant: Variant) -> f64 {
        if let Some(v) = self.terminal(act) {
            return v;
        }
        let position = position_of(self.t(), self.state.max_turns);
        let d = self.response_distribution(act, position);
        let own = self.own_input(act, position);
        let values = d.outcomes.iter().map(|(r, p)| (self.value_with(&own, act, r), *p));
        match variant {
            Variant::Expected => values.map(|(v, p)| v * p).sum(),
            Variant::Competitive => values.map(|(v, _)| v).fold(f64::INFINITY, f64::min),
            Variant::Cooperative => values.map(|(v, _)| v).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

impl Lookahead for ModelLookahead<'_> {
    type Act = DialogAct;
    type Utterance = Utterance;
    type Response = DialogAct;

    fn terminal(&self, act: &DialogAct) -> Option<f64> {
        resolve_outcome(self.state.last_act(), act, self.t() + 1, self.state.max_turns).map(|o| reward(&o, self.role))
    }

    fn utterances(&self, act: &DialogAct) -> Vec<(Utterance, f64)> {
        self.bank.enumerate_support(self.state, act, self.utterance_samples)
    }

    fn responses(&self, act: &DialogAct, utterance: &Utterance) -> Vec<(DialogAct, f64)> {
        self.response_distribution(act, utterance.position).outcomes
    }

    fn successor_value(&self, act: &DialogAct, utterance: &Utterance, response: &DialogAct) -> f64 {
        self.value_after(act, utterance.position, response)
    }
}

/// Every act the agent may play now: bare legal intents, and each priced
/// legal intent at every grid price.
pub fn candidate_acts(state: &DialogState) -> Vec<DialogAct> {
    let legal = legal_responses(state.last_act()).expect("valid state");
    let mut out = Vec::new();
    for intent in legal.iter() {
        if intent.requires_price() {
            out.extend((0..PRICE_GRID).map(|k| DialogAct::priced(intent, grid_price(k))));
        } else {
            out.push(DialogAct::bare(intent));
        }
    }
    out
}

/// RL policy probabilities of `acts`: intent probability times a Gaussian
/// over grid prices around the price head, normalised over the grid.
pub fn policy_prior(policy: &PolicyNet, state: &DialogState, role: Role, sigma: f64, acts: &[DialogAct]) -> Vec<f64> {
    let out = policy.output(state, role);
    let probs = PolicyNet::intent_probs(&out, state);
    let weights: Vec<f64> = (0..PRICE_GRID)
        .map(|k| {
            let d = (role.utility(grid_price(k)) - out.price_mean) / sigma;
            (-0.5 * d * d).exp()
        })
        .collect();
    let z: f64 = weights.iter().sum();
    acts.iter()
        .map(|a| {
            let p = probs[a.intent.index()];
            match a.price {
                Some(price) => p * weights[crate::features::grid_index(price)] / z,
                None => p,
            }
        })
        .collect()
}

/// Full record of one ToM decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub turn: usize,
    pub role: Role,
    pub condition: Vec<f64>,
    pub candidates: Vec<String>,
    pub scores: Vec<f64>,
    pub tom: Vec<f64>,
    pub prior: Vec<f64>,
    pub combined: Vec<f64>,
    /// The product with the prior vanished and the prior was used alone.
    pub fallback: bool,
    pub chosen: String,
}

/// Scores of every candidate and the resulting distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub acts: Vec<DialogAct>,
    pub condition: Vec<f64>,
    pub scores: Vec<f64>,
    pub tom: Vec<f64>,
    pub prior: Vec<f64>,
    pub combined: Vec<f64>,
    pub fallback: bool,
}

/// ToM manager: scores every candidate by one-step lookahead, turns scores
/// into a Boltzmann policy, reweights the RL policy with it and samples.
#[derive(Clone)]
pub struct TomAgent {
    pub models: TomModels,
    pub config: TomConfig,
    /// Spread of the RL price policy, in utility units.
    pub rl_price_sigma: f64,
    pub guard: GuardConfig,
    pub bank: Arc<TemplateBank>,
    /// Collects a [`DecisionRecord`] per move when set.
    pub debug: Option<Arc<Mutex<Vec<DecisionRecord>>>>,
}

impl TomAgent {
    pub fn new(models: TomModels, config: TomConfig, rl_price_sigma: f64, bank: Arc<TemplateBank>) -> Self {
        TomAgent {
            models,
            config,
            rl_price_sigma,
            guard: GuardConfig::default(),
            bank,
            debug: None,
        }
    }

    pub fn lookahead<'a>(&'a self, state: &'a DialogState, role: Role, condition: &Conditioning, gap_penalty: f64) -> ModelLookahead<'a> {
        ModelLookahead::new(
            state,
            role,
            &self.models.value,
            &self.models.transition,
            condition,
            &self.bank,
            &self.config,
            gap_penalty,
        )
    }

    pub fn decide(&self, state: &DialogState, role: Role) -> Decision {
        let condition = self.models.condition(state, role);
        let look = self.lookahead(state, role, &condition, 0.0);
        let acts = candidate_acts(state);
        let scores: Vec<f64> = acts.iter().map(|a| look.score(a, self.config.variant)).collect();
        let tom = boltzmann(&scores, self.config.beta);
        let prior = policy_prior(&self.models.policy, state, role, self.rl_price_sigma, &acts);
        let (combined, fallback) = combine_prior(&prior, &tom);
        if fallback {
            tracing::warn!(turn = state.turn_index(), "tom and rl policies disagree everywhere; using rl policy");
        }
        Decision {
            acts,
            condition: condition.to_vec(),
            scores,
            tom,
            prior,
            combined,
            fallback,
        }
    }
}

impl Negotiator for TomAgent {
    fn name(&self) -> String {
        format!("tom-{}", self.models.mode().label())
    }

    fn act(&self, state: &DialogState, role: Role, rng: &mut SimRng) -> DialogAct {
        let decision = self.decide(state, role);
        let chosen = decision.acts[sample_index(&decision.combined, rng)];
        let act = guard(chosen, state, role, &self.guard).0;
        if let Some(sink) = &self.debug {
            let record = DecisionRecord {
                turn: state.turn_index(),
                role,
                condition: decision.condition,
                candidates: decision.acts.iter().map(DialogAct::token).collect(),
                scores: decision.scores,
                tom: decision.tom,
                prior: decision.prior,
                combined: decision.combined,
                fallback: decision.fallback,
                chosen: act.token(),
            };
            sink.lock().expect("debug sink poisoned").push(record);
        }
        act
    }
}

/// Ids of intents a ToM candidate list covers, for diagnostics.
pub fn candidate_intents(acts: &[DialogAct]) -> Vec<Intent> {
    let mut out: Vec<Intent> = acts.iter().map(|a| a.intent).collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::managers::NetConfig;
    use crate::populations::{default_roster, PopulationAgent};
    use crate::rollout::{play, MatchConfig};
    use crate::tom::{tom_score, TypeDistribution};
    use rand::SeedableRng;

    fn tiny() -> NetConfig {
        NetConfig {
            hidden: 6,
            layers: 1,
            head_hidden: 8,
        }
    }

    fn models(mode: TomMode, seed: u64) -> TomModels {
        let mut rng = SimRng::seed_from_u64(seed);
        TomModels {
            policy: Arc::new(PolicyNet::new(&tiny(), &mut rng)),
            value: Arc::new(ValueNet::new(&tiny(), &mut rng)),
            transition: Arc::new(TransitionNet::new(mode, &tiny(), &mut rng)),
            identifier: Some(Arc::new(IdentifierNet::new(&tiny(), &mut rng))),
        }
    }

    fn agent(mode: TomMode) -> TomAgent {
        TomAgent::new(models(mode, 3), TomConfig::default(), 0.1, Arc::new(TemplateBank::builtin().clone()))
    }

    fn sample_states() -> Vec<DialogState> {
        let a = agent(TomMode::Implicit);
        let opp = PopulationAgent::new(default_roster().get(4).unwrap().clone());
        let ep = play(&a, &opp, &MatchConfig::default(), 11, TemplateBank::builtin()).unwrap();
        (0..ep.state.history.len())
            .filter(|&t| ep.state.history[t].agent == ep.agent)
            .map(|t| {
                let mut s = ep.state.clone();
                s.history.truncate(t);
                s.outcome = None;
                s
            })
            .collect()
    }

    #[test]
    fn fast_score_matches_enumeration() {
        let a = agent(TomMode::Explicit);
        let cond = Conditioning::Types(TypeDistribution::default());
        for state in sample_states() {
            let look = a.lookahead(&state, Role::Buyer, &cond, 0.05);
            for act in candidate_acts(&state).iter().step_by(7) {
                for variant in [Variant::Expected, Variant::Competitive, Variant::Cooperative] {
                    let fast = look.score(act, variant);
                    let full = tom_score(&look, act, variant);
                    assert!((fast - full).abs() < 1e-12, "{act:?} {fast} {full}");
                }
            }
        }
    }

    #[test]
    fn successor_values_match_the_critic() {
        let a = agent(TomMode::Implicit);
        let cond = Conditioning::Style([0.0; 3]);
        let mut checked = 0;
        for state in sample_states() {
            let look = a.lookahead(&state, Role::Buyer, &cond, 0.0);
            let t = state.turn_index();
            let scale = state.scenario.scale();
            let own = DialogAct::priced(Intent::Counter, 0.4);
            let reply = DialogAct::priced(Intent::Propose, 0.7);
            if !legal_responses(state.last_act()).unwrap().contains(Intent::Counter) {
                continue;
            }
            let mut next = state.clone();
            if next.push(Role::Buyer, own, Utterance::silent(&own, &scale, position_of(t, next.max_turns))).unwrap().is_some() {
                continue;
            }
            if next.push(Role::Seller, reply, Utterance::silent(&reply, &scale, position_of(t + 1, next.max_turns))).unwrap().is_some() {
                continue;
            }
            let direct = a.models.value.value_of(&next, Role::Buyer);
            let fast = look.value_after(&own, position_of(t, state.max_turns), &reply);
            assert!((direct - fast).abs() < 1e-12, "{direct} {fast}");
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn prior_is_a_distribution_and_decisions_are_legal() {
        let a = agent(TomMode::Implicit);
        for state in sample_states() {
            let d = a.decide(&state, Role::Buyer);
            assert!((d.prior.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((d.combined.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let legal = legal_responses(state.last_act()).unwrap();
            assert!(d.acts.iter().all(|x| legal.contains(x.intent)));
            assert_eq!(candidate_intents(&d.acts).len(), legal.len());
        }
    }

    #[test]
    fn offer_responses_are_scored_exactly() {
        // After an opponent offer only accept and reject are legal; both end
        // the dialog, so scores are the exact rewards.
        let a = agent(TomMode::Implicit);
        let state = sample_states().into_iter().next().unwrap();
        let mut s = state.clone();
        let scale = s.scenario.scale();
        if s.whose_turn() == Role::Buyer {
            s.push(Role::Buyer, DialogAct::bare(Intent::Greet), Utterance::silent(&DialogAct::bare(Intent::Greet), &scale, 0.0)).unwrap();
        }
        let offer = DialogAct::priced(Intent::Offer, 0.3);
        s.push(Role::Seller, offer, Utterance::silent(&offer, &scale, 0.0)).unwrap();
        let d = a.decide(&s, Role::Buyer);
        assert_eq!(d.acts.len(), 2);
        for (act, score) in d.acts.iter().zip(&d.scores) {
            let expected = if act.intent == Intent::Accept { 1.0 - 2.0 * 0.3 } else { -0.5 };
            assert!((score - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn debug_sink_records_each_move() {
        let mut a = agent(TomMode::Explicit);
        let sink = Arc::new(Mutex::new(Vec::new()));
        a.debug = Some(sink.clone());
        let opp = PopulationAgent::new(default_roster().get(5).unwrap().clone());
        let ep = play(&a, &opp, &MatchConfig::default(), 2, TemplateBank::builtin()).unwrap();
        let moves = ep.state.history.iter().filter(|e| e.agent == ep.agent).count();
        let records = sink.lock().unwrap();
        assert_eq!(records.len(), moves);
        assert_eq!(records[0].condition.len(), 7);
    }
}
