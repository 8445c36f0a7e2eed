//! Dialog-act vocabulary, slot rules and the turn-taking protocol.
//!
//! A dialog act is an intent plus an optional price slot. Prices live on a
//! normalized axis where `0.0` is the buyer's target and `1.0` the listing
//! price; the environment converts to and from currency at its boundary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The closed set of fifteen communicative intents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Intent {
    Greet,
    Inquire,
    Inform,
    Propose,
    Counter,
    CounterNoprice,
    Confirm,
    Affirm,
    Deny,
    Agree,
    Disagree,
    Offer,
    Accept,
    Reject,
    Quit,
}

impl Intent {
    pub const COUNT: usize = 15;

    pub const ALL: [Intent; Intent::COUNT] = [
        Intent::Greet,
        Intent::Inquire,
        Intent::Inform,
        Intent::Propose,
        Intent::Counter,
        Intent::CounterNoprice,
        Intent::Confirm,
        Intent::Affirm,
        Intent::Deny,
        Intent::Agree,
        Intent::Disagree,
        Intent::Offer,
        Intent::Accept,
        Intent::Reject,
        Intent::Quit,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Intent> {
        Intent::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Intent::Greet => "greet",
            Intent::Inquire => "inquire",
            Intent::Inform => "inform",
            Intent::Propose => "propose",
            Intent::Counter => "counter",
            Intent::CounterNoprice => "counter-noprice",
            Intent::Confirm => "confirm",
            Intent::Affirm => "affirm",
            Intent::Deny => "deny",
            Intent::Agree => "agree",
            Intent::Disagree => "disagree",
            Intent::Offer => "offer",
            Intent::Accept => "accept",
            Intent::Reject => "reject",
            Intent::Quit => "quit",
        }
    }

    /// Intents that must carry a price slot.
    pub fn requires_price(self) -> bool {
        matches!(
            self,
            Intent::Propose | Intent::Counter | Intent::Agree | Intent::Disagree | Intent::Offer
        )
    }

    /// Protocol acts with no natural-language rendering.
    pub fn is_silent(self) -> bool {
        matches!(self, Intent::Offer | Intent::Accept | Intent::Reject | Intent::Quit)
    }

    /// Acts after which the dialog is over.
    pub fn is_terminal(self) -> bool {
        matches!(self, Intent::Accept | Intent::Reject | Intent::Quit)
    }

    /// Acts that are only legal as a reply to an offer.
    pub fn is_offer_response(self) -> bool {
        matches!(self, Intent::Accept | Intent::Reject)
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Intent {
    type Err = ActError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Intent::ALL
            .iter()
            .copied()
            .find(|intent| intent.name() == s)
            .ok_or_else(|| ActError::UnknownIntent(s.to_string()))
    }
}

/// A compact set of intents backed by a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct IntentSet(u16);

impl IntentSet {
    pub const EMPTY: IntentSet = IntentSet(0);
    pub const ALL: IntentSet = IntentSet((1 << Intent::COUNT) - 1);

    pub fn of(intents: &[Intent]) -> Self {
        intents.iter().fold(IntentSet::EMPTY, |set, &i| set.with(i))
    }

    pub fn with(self, intent: Intent) -> Self {
        IntentSet(self.0 | (1 << intent.index()))
    }

    pub fn without(self, intent: Intent) -> Self {
        IntentSet(self.0 & !(1 << intent.index()))
    }

    pub fn contains(self, intent: Intent) -> bool {
        self.0 & (1 << intent.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Intent> {
        Intent::ALL.into_iter().filter(move |&i| self.contains(i))
    }

    /// Boolean mask indexed by `Intent::index`.
    pub fn mask(self) -> [bool; Intent::COUNT] {
        let mut mask = [false; Intent::COUNT];
        for intent in self.iter() {
            mask[intent.index()] = true;
        }
        mask
    }
}

impl fmt::Debug for IntentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActError {
    #[error("intent `{0}` requires a price slot")]
    MissingPrice(Intent),
    #[error("intent `{0}` does not take a price slot")]
    SpuriousPrice(Intent),
    #[error("price {0} is outside the normalized range [0, 1]")]
    PriceOutOfRange(f64),
    #[error("unknown intent `{0}`")]
    UnknownIntent(String),
    #[error("malformed act token `{0}`")]
    Malformed(String),
}

/// One move of the negotiation: an intent and, for priced intents, a
/// normalized price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DialogAct {
    pub intent: Intent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
}

impl DialogAct {
    pub fn new(intent: Intent, price: Option<f64>) -> Self {
        DialogAct { intent, price }
    }

    /// An act without a price slot.
    pub fn bare(intent: Intent) -> Self {
        DialogAct { intent, price: None }
    }

    pub fn priced(intent: Intent, price: f64) -> Self {
        DialogAct { intent, price: Some(price) }
    }

    /// Builds an act and checks it in one go.
    pub fn checked(intent: Intent, price: Option<f64>) -> Result<Self, ActError> {
        let act = DialogAct { intent, price };
        validate_act(&act)?;
        Ok(act)
    }

    /// Compact text token, e.g. `propose:0.460` or `greet`.
    pub fn token(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for DialogAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.price {
            Some(p) => write!(f, "{}:{:.3}", self.intent, p),
            None => write!(f, "{}", self.intent),
        }
    }
}

impl FromStr for DialogAct {
    type Err = ActError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, price) = match s.split_once(':') {
            Some((name, price)) => {
                let price: f64 = price
                    .parse()
                    .map_err(|_| ActError::Malformed(s.to_string()))?;
                (name, Some(price))
            }
            None => (s, None),
        };
        let intent: Intent = name.parse()?;
        DialogAct::checked(intent, price)
    }
}

/// Checks the price-slot rule and the normalized range.
pub fn validate_act(act: &DialogAct) -> Result<(), ActError> {
    match (act.intent.requires_price(), act.price) {
        (true, None) => Err(ActError::MissingPrice(act.intent)),
        (false, Some(_)) => Err(ActError::SpuriousPrice(act.intent)),
        (true, Some(p)) if !(0.0..=1.0).contains(&p) => Err(ActError::PriceOutOfRange(p)),
        _ => Ok(()),
    }
}

/// Intents the next speaker may use after `previous` (`None` at dialog start).
pub fn legal_responses(previous: Option<&DialogAct>) -> Result<IntentSet, ActError> {
    let Some(previous) = previous else {
        return Ok(opening_intents());
    };
    validate_act(previous)?;
    Ok(legal_after(previous.intent))
}

/// Same as [`legal_responses`] but keyed on the intent alone.
pub fn legal_after(previous: Intent) -> IntentSet {
    match previous {
        Intent::Offer => IntentSet::of(&[Intent::Accept, Intent::Reject]),
        Intent::Accept | Intent::Reject | Intent::Quit => IntentSet::EMPTY,
        _ => opening_intents(),
    }
}

fn opening_intents() -> IntentSet {
    IntentSet::ALL.without(Intent::Accept).without(Intent::Reject)
}

/// True for acts that end the dialog (accept, reject, quit).
pub fn is_terminal(intent: Intent) -> bool {
    intent.is_terminal()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn propose_with_price_is_valid() {
        assert_eq!(validate_act(&DialogAct::priced(Intent::Propose, 0.46)), Ok(()));
    }

    #[test]
    fn slot_rule_errors_are_distinct() {
        assert_eq!(
            validate_act(&DialogAct::bare(Intent::Propose)),
            Err(ActError::MissingPrice(Intent::Propose))
        );
        assert_eq!(
            validate_act(&DialogAct::priced(Intent::Greet, 0.3)),
            Err(ActError::SpuriousPrice(Intent::Greet))
        );
        assert!(matches!(
            "haggle".parse::<Intent>(),
            Err(ActError::UnknownIntent(_))
        ));
        assert_eq!(
            validate_act(&DialogAct::priced(Intent::Offer, 1.5)),
            Err(ActError::PriceOutOfRange(1.5))
        );
    }

    #[test]
    fn counter_noprice_has_no_slot() {
        assert!(validate_act(&DialogAct::bare(Intent::CounterNoprice)).is_ok());
        assert!(validate_act(&DialogAct::priced(Intent::CounterNoprice, 0.5)).is_err());
    }

    #[test]
    fn offer_forces_accept_or_reject() {
        let legal = legal_responses(Some(&DialogAct::priced(Intent::Offer, 0.65))).unwrap();
        assert_eq!(legal, IntentSet::of(&[Intent::Accept, Intent::Reject]));
    }

    #[test]
    fn terminal_acts_allow_nothing() {
        for intent in [Intent::Accept, Intent::Reject, Intent::Quit] {
            assert!(legal_responses(Some(&DialogAct::bare(intent))).unwrap().is_empty());
        }
    }

    #[test]
    fn counter_allows_everything_but_offer_responses() {
        let legal = legal_responses(Some(&DialogAct::priced(Intent::Counter, 0.5))).unwrap();
        // Enumerate the ontology rows and drop the two offer responses.
        let expected: Vec<Intent> = Intent::ALL
            .into_iter()
            .filter(|i| *i != Intent::Accept && *i != Intent::Reject)
            .collect();
        assert_eq!(legal.iter().collect::<Vec<_>>(), expected);
        assert_eq!(legal.len(), 13);
        assert!(legal.contains(Intent::Offer) && legal.contains(Intent::Quit));
    }

    #[test]
    fn invalid_previous_is_rejected() {
        assert!(legal_responses(Some(&DialogAct::bare(Intent::Offer))).is_err());
    }

    #[test]
    fn terminal_flags() {
        assert!(is_terminal(Intent::Quit));
        assert!(!is_terminal(Intent::Offer));
        assert!(!is_terminal(Intent::Inform));
        assert!(Intent::Offer.is_silent());
    }

    #[test]
    fn tokens_round_trip() {
        for token in ["propose:0.460", "offer:0.650", "greet", "counter-noprice"] {
            let act: DialogAct = token.parse().unwrap();
            assert_eq!(act.token(), token);
        }
        assert!("offer".parse::<DialogAct>().is_err());
        assert!("offer:abc".parse::<DialogAct>().is_err());
    }

    #[test]
    fn index_is_dense() {
        for (i, intent) in Intent::ALL.iter().enumerate() {
            assert_eq!(intent.index(), i);
            assert_eq!(Intent::from_index(i), Some(*intent));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_act() -> impl Strategy<Value = DialogAct> {
            (0..Intent::COUNT, proptest::option::of(-0.5f64..1.5))
                .prop_map(|(i, p)| DialogAct::new(Intent::from_index(i).unwrap(), p))
        }

        proptest! {
            #[test]
            fn validation_is_deterministic(act in any_act()) {
                prop_assert_eq!(validate_act(&act), validate_act(&act));
            }

            #[test]
            fn offer_responses_only_follow_offers(act in any_act()) {
                if let Ok(legal) = legal_responses(Some(&act)) {
                    let has_response = legal.contains(Intent::Accept) || legal.contains(Intent::Reject);
                    prop_assert_eq!(has_response, act.intent == Intent::Offer);
                }
            }
        }
    }
}
