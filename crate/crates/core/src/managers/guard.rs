use serde::{Deserialize, Serialize};

use crate::environment::{DialogState, Role};
use crate::ontology::{DialogAct, Intent};

/// Own utility an SL+rule agent requires before accepting an offer.
pub const SL_ACCEPT_UTILITY: f64 = 0.7;

/// Hard rules applied after every learned policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardConfig {
    /// Worst acceptable own utility. `0` puts a buyer's bottom line at the
    /// listing price and a seller's at the buyer target.
    pub bottom_utility: f64,
    /// Offers are accepted only at or above this own utility, when set.
    #[serde(default)]
    pub min_accept_utility: Option<f64>,
}

impl Default for GuardConfig {
    fn default() -> Self {
        GuardConfig {
            bottom_utility: 0.0,
            min_accept_utility: None,
        }
    }
}

impl GuardConfig {
    pub fn sl_rule() -> Self {
        GuardConfig {
            bottom_utility: 0.0,
            min_accept_utility: Some(SL_ACCEPT_UTILITY),
        }
    }
}

/// Rewrites `act` so it respects the bottom line: offers worse than the
/// bottom line are rejected, and own prices never cross it. Returns the act
/// and whether it changed.
pub fn guard(act: DialogAct, state: &DialogState, role: Role, config: &GuardConfig) -> (DialogAct, bool) {
    if let Some(last) = state.last_act() {
        if last.intent == Intent::Offer {
            let utility = role.utility(last.price.expect("offers are priced"));
            let floor = config.min_accept_utility.unwrap_or(config.bottom_utility).max(config.bottom_utility);
            if act.intent == Intent::Accept && utility < floor {
                return (DialogAct::bare(Intent::Reject), true);
            }
            return (act, false);
        }
    }
    match act.price {
        Some(p) if act.intent != Intent::Disagree && role.utility(p) < config.bottom_utility => {
            let clamped = role.price_for_utility(config.bottom_utility);
            (DialogAct::priced(act.intent, clamped), true)
        }
        _ => (act, false),
    }
}
