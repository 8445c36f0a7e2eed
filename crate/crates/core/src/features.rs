//! Per-turn feature vectors seen by the learned models, always from one
//! observer's point of view.

use crate::environment::{HistoryEntry, Role};
use crate::ontology::{DialogAct, Intent};
use crate::parser::style_features;

/// `[present, is_own, intent one-hot (15), has_price, price utility, position, observer is buyer]`
pub const ACT_DIM: usize = 4 + Intent::COUNT + 2;
/// [`ACT_DIM`] plus cooperative and competitive token counts.
pub const ID_DIM: usize = ACT_DIM + 2;

pub const PRESENT: usize = 0;
pub const IS_OWN: usize = 1;
pub const INTENT0: usize = 2;
pub const HAS_PRICE: usize = INTENT0 + Intent::COUNT;
pub const PRICE: usize = HAS_PRICE + 1;
pub const POSITION: usize = PRICE + 1;
pub const IS_BUYER: usize = POSITION + 1;

/// Number of normalized price points used for lookahead and price
/// distributions.
pub const PRICE_GRID: usize = 100;

pub fn grid_price(k: usize) -> f64 {
    k as f64 / (PRICE_GRID - 1) as f64
}

/// Nearest grid index of a normalized price.
pub fn grid_index(price: f64) -> usize {
    ((price.clamp(0.0, 1.0) * (PRICE_GRID - 1) as f64).round()) as usize
}

/// Non-zero entries of an act's feature vector.
pub fn act_sparse(agent: Role, act: &DialogAct, position: f64, observer: Role) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(7);
    out.push((PRESENT, 1.0));
    if agent == observer {
        out.push((IS_OWN, 1.0));
    }
    out.push((INTENT0 + act.intent.index(), 1.0));
    if let Some(p) = act.price {
        out.push((HAS_PRICE, 1.0));
        out.push((PRICE, observer.utility(p)));
    }
    out.push((POSITION, position));
    if observer == Role::Buyer {
        out.push((IS_BUYER, 1.0));
    }
    out
}

pub fn act_features(agent: Role, act: &DialogAct, position: f64, observer: Role) -> Vec<f64> {
    let mut v = vec![0.0; ACT_DIM];
    for (i, x) in act_sparse(agent, act, position, observer) {
        v[i] = x;
    }
    v
}

/// Placeholder for a missing history slot.
pub fn absent() -> Vec<f64> {
    vec![0.0; ACT_DIM]
}

pub fn entry_features(entry: &HistoryEntry, observer: Role) -> Vec<f64> {
    act_features(entry.agent, &entry.act, entry.utterance.position, observer)
}

pub fn history_features(history: &[HistoryEntry], observer: Role) -> Vec<Vec<f64>> {
    history.iter().map(|e| entry_features(e, observer)).collect()
}

/// Act features extended with the utterance's style counts.
pub fn identifier_features(entry: &HistoryEntry, observer: Role) -> Vec<f64> {
    let mut v = entry_features(entry, observer);
    let style = style_features(&entry.utterance);
    v.push(style[0]);
    v.push(style[1]);
    v
}

/// Style features of the most recent utterance by `speaker`, zeros if none.
pub fn last_style_of(history: &[HistoryEntry], speaker: Role) -> [f64; 3] {
    history
        .iter()
        .rev()
        .find(|e| e.agent == speaker)
        .map(|e| style_features(&e.utterance))
        .unwrap_or([0.0; 3])
}
