//! The alternating-turn bargaining process: scenarios, state transitions,
//! termination, rewards and per-dialog metrics.

use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::Utterance;
use crate::ontology::{legal_responses, validate_act, ActError, DialogAct, Intent};
use crate::SimRng;

/// Default dialog length limit.
pub const DEFAULT_MAX_TURNS: usize = 20;

/// Reward both sides receive when no deal is reached.
pub const NO_DEAL_REWARD: f64 = -0.5;

/// The two parties. Buyer is `-1`, seller is `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Buyer,
    Seller,
}

impl Role {
    pub fn id(self) -> i8 {
        match self {
            Role::Buyer => -1,
            Role::Seller => 1,
        }
    }

    pub fn other(self) -> Role {
        match self {
            Role::Buyer => Role::Seller,
            Role::Seller => Role::Buyer,
        }
    }

    /// Utility of a normalized price for this role: `1` at the role's own
    /// extreme, `0` at the other side's.
    pub fn utility(self, price: f64) -> f64 {
        match self {
            Role::Buyer => 1.0 - price,
            Role::Seller => price,
        }
    }

    /// Inverse of [`Role::utility`].
    pub fn price_for_utility(self, utility: f64) -> f64 {
        match self {
            Role::Buyer => 1.0 - utility,
            Role::Seller => utility,
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Buyer => "buyer",
            Role::Seller => "seller",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("it is the {expected}'s turn, not the {actual}'s")]
    OutOfTurn { expected: Role, actual: Role },
    #[error("`{attempted}` is not a legal reply to `{previous}`")]
    ProtocolViolation { previous: String, attempted: String },
    #[error("dialog is already over")]
    DialogOver,
    #[error(transparent)]
    InvalidAct(#[from] ActError),
}

/// Maps normalized prices to currency and back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceScale {
    /// Currency value of normalized `0.0` (the buyer's target).
    pub low: f64,
    /// Currency value of normalized `1.0` (the listing price).
    pub high: f64,
}

impl PriceScale {
    pub fn to_currency(&self, normalized: f64) -> f64 {
        self.low + normalized * (self.high - self.low)
    }

    pub fn normalize(&self, currency: f64) -> f64 {
        (currency - self.low) / (self.high - self.low)
    }
}

/// The initial state of a dialog: the listed item and both private targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: u64,
    pub listing_price: f64,
    pub buyer_target: f64,
    /// Always equal to the listing price.
    pub seller_target: f64,
    pub description_tags: Vec<String>,
}

impl Scenario {
    pub fn new(
        scenario_id: u64,
        listing_price: f64,
        buyer_target: f64,
        description_tags: Vec<String>,
    ) -> Result<Self, EnvError> {
        if !(listing_price > 0.0 && buyer_target > 0.0) {
            return Err(EnvError::InvalidScenario("prices must be positive".into()));
        }
        if buyer_target >= listing_price {
            return Err(EnvError::InvalidScenario(format!(
                "buyer target {buyer_target} must be below listing {listing_price}"
            )));
        }
        Ok(Scenario {
            scenario_id,
            listing_price,
            buyer_target,
            seller_target: listing_price,
            description_tags,
        })
    }

    pub fn scale(&self) -> PriceScale {
        PriceScale {
            low: self.buyer_target,
            high: self.listing_price,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.listing_price + self.buyer_target)
    }

    /// Target of the given role in currency.
    pub fn target(&self, role: Role) -> f64 {
        match role {
            Role::Buyer => self.buyer_target,
            Role::Seller => self.seller_target,
        }
    }
}

/// Ranges for synthetic scenario generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub listing_min: f64,
    pub listing_max: f64,
    /// Buyer target as a fraction of the listing price.
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            listing_min: 40.0,
            listing_max: 60.0,
            ratio_min: 0.7,
            ratio_max: 0.8,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: &str| Err(EnvError::InvalidConfig(msg.to_string()));
        if !(self.listing_min > 0.0 && self.listing_min <= self.listing_max) {
            return bad("listing range must be positive and ordered");
        }
        if !(self.ratio_min > 0.0 && self.ratio_min <= self.ratio_max) {
            return bad("target ratio range must be positive and ordered");
        }
        if self.ratio_max >= 1.0 {
            return bad("buyer target must be below listing (ratio < 1)");
        }
        Ok(())
    }
}

const ITEM_TAGS: [&str; 6] = ["phone", "furniture", "bike", "electronics", "housing", "car"];
const CONDITION_TAGS: [&str; 3] = ["new", "like-new", "used"];

/// Draws a scenario deterministically from `seed`.
pub fn sample_scenario(seed: u64, config: &ScenarioConfig) -> Result<Scenario, EnvError> {
    config.validate()?;
    let mut rng = SimRng::seed_from_u64(seed);
    let listing = rng.gen_range(config.listing_min..=config.listing_max).round();
    let ratio = rng.gen_range(config.ratio_min..=config.ratio_max);
    let buyer_target = (ratio * listing * 100.0).round() / 100.0;
    let tags = vec![
        ITEM_TAGS[rng.gen_range(0..ITEM_TAGS.len())].to_string(),
        CONDITION_TAGS[rng.gen_range(0..CONDITION_TAGS.len())].to_string(),
    ];
    Scenario::new(seed, listing, buyer_target, tags)
}

/// One recorded move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub agent: Role,
    pub act: DialogAct,
    pub utterance: Utterance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Deal,
    NoDealReject,
    NoDealQuit,
    NoDealTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    /// Normalized deal price, present only for deals.
    pub deal_price: Option<f64>,
    /// Number of acts in the dialog.
    pub length: usize,
}

impl Outcome {
    pub fn deal(price: f64, length: usize) -> Self {
        Outcome {
            kind: OutcomeKind::Deal,
            deal_price: Some(price),
            length,
        }
    }

    pub fn no_deal(kind: OutcomeKind, length: usize) -> Self {
        debug_assert!(kind != OutcomeKind::Deal);
        Outcome {
            kind,
            deal_price: None,
            length,
        }
    }

    pub fn is_deal(&self) -> bool {
        self.kind == OutcomeKind::Deal
    }
}

/// Full observable dialog state `s_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogState {
    pub scenario: Scenario,
    pub history: Vec<HistoryEntry>,
    pub max_turns: usize,
    pub first_mover: Role,
    #[serde(default)]
    pub outcome: Option<Outcome>,
}

impl DialogState {
    pub fn new(scenario: Scenario, max_turns: usize, first_mover: Role) -> Self {
        DialogState {
            scenario,
            history: Vec::new(),
            max_turns,
            first_mover,
            outcome: None,
        }
    }

    pub fn turn_index(&self) -> usize {
        self.history.len()
    }

    pub fn whose_turn(&self) -> Role {
        if self.history.len() % 2 == 0 {
            self.first_mover
        } else {
            self.first_mover.other()
        }
    }

    pub fn last_act(&self) -> Option<&DialogAct> {
        self.history.last().map(|e| &e.act)
    }

    pub fn is_over(&self) -> bool {
        self.outcome.is_some()
    }

    /// Most recent priced act by `role`, if any.
    pub fn last_price_of(&self, role: Role) -> Option<f64> {
        self.history
            .iter()
            .rev()
            .filter(|e| e.agent == role)
            .find_map(|e| e.act.price)
    }

    /// Validates and appends a move in place, returning the outcome when the
    /// dialog ends.
    pub fn push(
        &mut self,
        agent: Role,
        act: DialogAct,
        utterance: Utterance,
    ) -> Result<Option<Outcome>, EnvError> {
        if self.outcome.is_some() {
            return Err(EnvError::DialogOver);
        }
        let expected = self.whose_turn();
        if agent != expected {
            return Err(EnvError::OutOfTurn {
                expected,
                actual: agent,
            });
        }
        validate_act(&act)?;
        let legal = legal_responses(self.last_act())?;
        if !legal.contains(act.intent) {
            return Err(EnvError::ProtocolViolation {
                previous: self
                    .last_act()
                    .map(|a| a.token())
                    .unwrap_or_else(|| "<start>".into()),
                attempted: act.token(),
            });
        }
        let outcome = resolve_outcome(self.last_act(), &act, self.history.len() + 1, self.max_turns);
        self.history.push(HistoryEntry {
            agent,
            act,
            utterance,
        });
        self.outcome = outcome;
        Ok(outcome)
    }

    /// Functional form of [`DialogState::push`].
    pub fn step(
        &self,
        agent: Role,
        act: DialogAct,
        utterance: Utterance,
    ) -> Result<(DialogState, Option<Outcome>), EnvError> {
        let mut next = self.clone();
        let outcome = next.push(agent, act, utterance)?;
        Ok((next, outcome))
    }
}

/// Outcome (if any) of playing `act` as the `length`-th move after `previous`.
///
/// Shared by the environment and by lookahead simulation so both agree on
/// termination exactly.
pub fn resolve_outcome(
    previous: Option<&DialogAct>,
    act: &DialogAct,
    length: usize,
    max_turns: usize,
) -> Option<Outcome> {
    match act.intent {
        Intent::Accept => {
            let price = previous
                .and_then(|p| p.price)
                .expect("accept only follows a priced offer");
            Some(Outcome::deal(price, length))
        }
        Intent::Reject => Some(Outcome::no_deal(OutcomeKind::NoDealReject, length)),
        Intent::Quit => Some(Outcome::no_deal(OutcomeKind::NoDealQuit, length)),
        _ if length >= max_turns => Some(Outcome::no_deal(OutcomeKind::NoDealTimeout, length)),
        _ => None,
    }
}

/// Terminal reward of `agent`. Linear in the deal price: `1` at the agent's
/// own extreme, `0` at the midpoint of listing and buyer target; no deal
/// gives [`NO_DEAL_REWARD`].
pub fn reward(outcome: &Outcome, agent: Role) -> f64 {
    match outcome.deal_price {
        Some(price) => deal_reward(price, agent),
        None => NO_DEAL_REWARD,
    }
}

/// Reward of a deal at normalized `price`. In currency terms the seller gets
/// `(P - P_mid) / (P_list - P_mid)` and the buyer `(P_mid - P) / (P_mid - P_target)`;
/// on the normalized axis both collapse to `±(2p - 1)`.
pub fn deal_reward(price: f64, agent: Role) -> f64 {
    match agent {
        Role::Seller => 2.0 * price - 1.0,
        Role::Buyer => 1.0 - 2.0 * price,
    }
}

/// Per-dialog evaluation record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub agent: Role,
    pub agreement: u8,
    pub utility_buyer: f64,
    pub utility_seller: f64,
    /// Only defined for deals; negative values are truncated to zero.
    pub fairness: Option<f64>,
    pub length: usize,
    pub reward_buyer: f64,
    pub reward_seller: f64,
}

impl MetricsRecord {
    pub fn utility(&self) -> f64 {
        match self.agent {
            Role::Buyer => self.utility_buyer,
            Role::Seller => self.utility_seller,
        }
    }

    pub fn reward(&self) -> f64 {
        match self.agent {
            Role::Buyer => self.reward_buyer,
            Role::Seller => self.reward_seller,
        }
    }
}

/// Objective utility `(P_deal - P_target^{-i}) / (P_target^i - P_target^{-i})`.
pub fn utility(outcome: &Outcome, scenario: &Scenario, role: Role) -> f64 {
    let Some(price) = outcome.deal_price else {
        return 0.0;
    };
    let deal = scenario.scale().to_currency(price);
    let own = scenario.target(role);
    let other = scenario.target(role.other());
    (deal - other) / (own - other)
}

pub fn fairness_of(utility: f64) -> f64 {
    (1.0 - 2.0 * (utility - 0.5).abs()).max(0.0)
}

pub fn metrics(outcome: &Outcome, scenario: &Scenario, agent: Role) -> MetricsRecord {
    let utility_buyer = utility(outcome, scenario, Role::Buyer);
    let utility_seller = utility(outcome, scenario, Role::Seller);
    let own_utility = match agent {
        Role::Buyer => utility_buyer,
        Role::Seller => utility_seller,
    };
    MetricsRecord {
        agent,
        agreement: outcome.is_deal() as u8,
        utility_buyer,
        utility_seller,
        fairness: outcome.is_deal().then(|| fairness_of(own_utility)),
        length: outcome.length,
        reward_buyer: reward(outcome, Role::Buyer),
        reward_seller: reward(outcome, Role::Seller),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::Utterance;

    fn scenario() -> Scenario {
        Scenario::new(1, 50.0, 38.0, vec!["phone".into()]).unwrap()
    }

    fn silent(act: DialogAct) -> Utterance {
        Utterance::silent(&act, &scenario().scale(), 0.0)
    }

    #[test]
    fn scenario_sampling_is_pinned() {
        let config = ScenarioConfig::default();
        let s = sample_scenario(7, &config).unwrap();
        // Frozen output of the generator at seed 7.
        assert_eq!(s.listing_price, 43.0);
        assert_eq!(s.buyer_target, 30.82);
        assert_eq!(s.seller_target, s.listing_price);
        assert!(s.buyer_target < s.listing_price);
    }

    #[test]
    fn scenario_sampling_is_deterministic() {
        let config = ScenarioConfig::default();
        assert_eq!(
            sample_scenario(99, &config).unwrap(),
            sample_scenario(99, &config).unwrap()
        );
    }

    #[test]
    fn ratio_above_one_is_rejected() {
        let config = ScenarioConfig {
            ratio_min: 1.1,
            ratio_max: 1.2,
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            sample_scenario(7, &config),
            Err(EnvError::InvalidConfig(_))
        ));
    }

    #[test]
    fn accept_deals_at_standing_offer() {
        let mut state = DialogState::new(scenario(), DEFAULT_MAX_TURNS, Role::Seller);
        let offer = DialogAct::priced(Intent::Offer, 0.86);
        assert_eq!(state.push(Role::Seller, offer, silent(offer)).unwrap(), None);
        let accept = DialogAct::bare(Intent::Accept);
        let outcome = state.push(Role::Buyer, accept, silent(accept)).unwrap().unwrap();
        assert_eq!(outcome.kind, OutcomeKind::Deal);
        assert_eq!(outcome.deal_price, Some(0.86));
        assert_eq!(outcome.length, 2);
    }

    #[test]
    fn non_response_after_offer_is_a_violation() {
        let mut state = DialogState::new(scenario(), DEFAULT_MAX_TURNS, Role::Seller);
        let offer = DialogAct::priced(Intent::Offer, 0.5);
        state.push(Role::Seller, offer, silent(offer)).unwrap();
        let greet = DialogAct::bare(Intent::Greet);
        assert!(matches!(
            state.push(Role::Buyer, greet, silent(greet)),
            Err(EnvError::ProtocolViolation { .. })
        ));
    }

    #[test]
    fn out_of_turn_is_rejected() {
        let mut state = DialogState::new(scenario(), DEFAULT_MAX_TURNS, Role::Buyer);
        let greet = DialogAct::bare(Intent::Greet);
        assert!(matches!(
            state.push(Role::Seller, greet, silent(greet)),
            Err(EnvError::OutOfTurn { .. })
        ));
    }

    #[test]
    fn twentieth_act_times_out() {
        let mut state = DialogState::new(scenario(), 20, Role::Buyer);
        let inform = DialogAct::bare(Intent::Inform);
        for i in 0..19 {
            let role = state.whose_turn();
            assert_eq!(state.push(role, inform, silent(inform)).unwrap(), None, "turn {i}");
        }
        let role = state.whose_turn();
        let outcome = state.push(role, inform, silent(inform)).unwrap().unwrap();
        assert_eq!(outcome.kind, OutcomeKind::NoDealTimeout);
        assert_eq!(state.turn_index(), 20);
        assert!(state.push(role.other(), inform, silent(inform)).is_err());
    }

    #[test]
    fn reward_anchors() {
        let deal = |p| Outcome::deal(p, 4);
        assert_eq!(reward(&deal(0.0), Role::Buyer), 1.0);
        assert_eq!(reward(&deal(1.0), Role::Seller), 1.0);
        assert_eq!(reward(&deal(0.5), Role::Buyer), 0.0);
        assert_eq!(reward(&deal(0.5), Role::Seller), 0.0);
        let none = Outcome::no_deal(OutcomeKind::NoDealQuit, 3);
        assert_eq!(reward(&none, Role::Buyer), -0.5);
        assert_eq!(reward(&none, Role::Seller), -0.5);
    }

    #[test]
    fn reward_matches_currency_formula() {
        let s = scenario();
        for p in [0.0, 0.1, 0.37, 0.5, 0.81, 1.0] {
            let deal = s.scale().to_currency(p);
            let mid = s.midpoint();
            let seller = (deal - mid) / (s.listing_price - mid);
            let buyer = (mid - deal) / (mid - s.buyer_target);
            assert!((deal_reward(p, Role::Seller) - seller).abs() < 1e-12);
            assert!((deal_reward(p, Role::Buyer) - buyer).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_examples() {
        let s = scenario();
        let mid = metrics(&Outcome::deal(0.5, 8), &s, Role::Buyer);
        assert!((mid.utility_buyer - 0.5).abs() < 1e-12);
        assert!((mid.utility_seller - 0.5).abs() < 1e-12);
        assert!((mid.fairness.unwrap() - 1.0).abs() < 1e-12);

        let listing = metrics(&Outcome::deal(1.0, 8), &s, Role::Buyer);
        assert!((listing.utility_seller - 1.0).abs() < 1e-12);
        assert!(listing.utility_buyer.abs() < 1e-12);
        assert_eq!(listing.fairness, Some(0.0));

        let none = metrics(&Outcome::no_deal(OutcomeKind::NoDealReject, 6), &s, Role::Buyer);
        assert_eq!(none.agreement, 0);
        assert_eq!(none.utility_buyer, 0.0);
        assert_eq!(none.utility_seller, 0.0);
        assert_eq!(none.fairness, None);
        assert_eq!(none.length, 6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn deal_identities(price in 0.0f64..=1.0, listing in 10.0f64..500.0, ratio in 0.3f64..0.95) {
                let s = Scenario::new(0, listing, listing * ratio, vec![]).unwrap();
                let m = metrics(&Outcome::deal(price, 6), &s, Role::Buyer);
                prop_assert!((m.utility_buyer + m.utility_seller - 1.0).abs() < 1e-9);
                prop_assert!((m.reward_buyer + m.reward_seller).abs() < 1e-9);
                let fb = fairness_of(m.utility_buyer);
                let fs = fairness_of(m.utility_seller);
                prop_assert!((fb - fs).abs() < 1e-9);
            }
        }
    }
}
