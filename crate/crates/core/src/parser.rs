//! Rule-based parsing of utterances back into dialog acts, and the style
//! features read by the opponent identifier.

use thiserror::Error;

use crate::environment::PriceScale;
use crate::generator::{TemplateBank, Utterance};
use crate::ontology::{ActError, DialogAct, Intent};
use crate::populations::{valence_of, Valence};

/// Length of [`style_features`].
pub const STYLE_DIM: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("no template {id} for {intent}")]
    UnknownTemplate { intent: Intent, id: u32 },
    #[error("text matches no template: {0:?}")]
    Unmatched(String),
    #[error(transparent)]
    InvalidAct(#[from] ActError),
}

/// Recovers the act behind an utterance from its template key.
pub fn parse(bank: &TemplateBank, utterance: &Utterance) -> Result<DialogAct, ParseError> {
    if let Some(id) = utterance.template_id {
        if bank.get(utterance.intent, id).is_none() {
            return Err(ParseError::UnknownTemplate {
                intent: utterance.intent,
                id,
            });
        }
    } else if !utterance.intent.is_silent() {
        return Err(ParseError::Unmatched(utterance.text.clone()));
    }
    Ok(DialogAct::checked(utterance.intent, utterance.rendered_price)?)
}

/// Surface-text parse. Prices come back rounded to the cent.
pub fn parse_text(bank: &TemplateBank, text: &str, scale: &PriceScale) -> Result<DialogAct, ParseError> {
    let unmatched = || ParseError::Unmatched(text.to_string());
    let body = strip_style_prefix(text.trim());

    for intent in Intent::ALL.into_iter().filter(|i| i.is_silent()) {
        let upper = intent.name().to_uppercase();
        if body == upper {
            return Ok(DialogAct::checked(intent, None)?);
        }
        if let Some(inner) = body.strip_prefix(&upper).and_then(|r| r.strip_prefix('(')).and_then(|r| r.strip_suffix(')')) {
            let price = parse_currency(inner).ok_or_else(unmatched)?;
            return Ok(DialogAct::checked(intent, Some(scale.normalize(price).clamp(0.0, 1.0)))?);
        }
    }

    for intent in Intent::ALL.into_iter().filter(|i| !i.is_silent()) {
        for template in bank.templates(intent) {
            match template.text.split_once("{price}") {
                None if template.text == body => return Ok(DialogAct::bare(intent)),
                None => {}
                Some((head, tail)) => {
                    let Some(slot) = body.strip_prefix(head).and_then(|r| r.strip_suffix(tail)) else {
                        continue;
                    };
                    if let Some(price) = parse_currency(slot) {
                        return Ok(DialogAct::checked(intent, Some(scale.normalize(price).clamp(0.0, 1.0)))?);
                    }
                }
            }
        }
    }
    Err(unmatched())
}

fn strip_style_prefix(text: &str) -> &str {
    if let Some((head, rest)) = text.split_once(", ") {
        if !head.is_empty() && head.split(' ').all(|w| valence_of(w).is_some()) {
            return rest;
        }
    }
    text
}

fn parse_currency(slot: &str) -> Option<f64> {
    slot.strip_prefix('$')?.parse().ok()
}

/// `[cooperative count, competitive count, position]`; all zero for silent acts.
pub fn style_features(utterance: &Utterance) -> [f64; STYLE_DIM] {
    if utterance.is_silent() {
        return [0.0; STYLE_DIM];
    }
    let mut out = [0.0, 0.0, utterance.position];
    for token in &utterance.style_tokens {
        match token.valence() {
            Some(Valence::Cooperative) => out[0] += 1.0,
            Some(Valence::Competitive) => out[1] += 1.0,
            None => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{DialogState, Role, Scenario};
    use crate::generator::GenerationMode;
    use crate::populations::StyleToken;
    use crate::SimRng;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn scale() -> PriceScale {
        PriceScale { low: 45.0, high: 65.0 }
    }

    fn state() -> DialogState {
        DialogState::new(Scenario::new(2, 65.0, 45.0, vec![]).unwrap(), 20, Role::Seller)
    }

    #[test]
    fn greeting_text_parses() {
        let act = parse_text(TemplateBank::builtin(), "Hello I am interested in buying.", &scale()).unwrap();
        assert_eq!(act, DialogAct::bare(Intent::Greet));
    }

    #[test]
    fn offer_marker_parses() {
        let act = parse_text(TemplateBank::builtin(), "OFFER($65)", &scale()).unwrap();
        assert_eq!(act, DialogAct::priced(Intent::Offer, 1.0));
        let act = parse_text(TemplateBank::builtin(), "ACCEPT", &scale()).unwrap();
        assert_eq!(act, DialogAct::bare(Intent::Accept));
    }

    #[test]
    fn corrupted_template_id_fails() {
        let bank = TemplateBank::builtin();
        let mut rng = SimRng::seed_from_u64(0);
        let mut u = bank.generate(&state(), &DialogAct::bare(Intent::Greet), vec![], &mut rng, GenerationMode::Deterministic);
        u.template_id = Some(999);
        assert_eq!(
            parse(bank, &u),
            Err(ParseError::UnknownTemplate { intent: Intent::Greet, id: 999 })
        );
    }

    #[test]
    fn every_template_round_trips() {
        let bank = TemplateBank::builtin();
        let st = state();
        for intent in Intent::ALL {
            let act = if intent.requires_price() {
                DialogAct::priced(intent, 0.35)
            } else {
                DialogAct::bare(intent)
            };
            let support = bank.enumerate_support(&st, &act, usize::MAX);
            for (u, _) in support {
                assert_eq!(parse(bank, &u).unwrap(), act);
                let surface = parse_text(bank, &u.text, &st.scenario.scale()).unwrap();
                assert_eq!(surface.intent, intent, "{}", u.text);
                if let Some(p) = surface.price {
                    assert!((p - 0.35).abs() < 1e-9, "{}", u.text);
                }
            }
        }
    }

    #[test]
    fn style_counts() {
        let mut u = Utterance::silent(&DialogAct::bare(Intent::Greet), &scale(), 0.25);
        u.template_id = Some(0);
        u.style_tokens = vec![StyleToken::new("unfortunately"), StyleToken::new("afraid")];
        assert_eq!(style_features(&u), [0.0, 2.0, 0.25]);
        u.style_tokens = vec![StyleToken::new("great"), StyleToken::new("afraid")];
        assert_eq!(style_features(&u), [1.0, 1.0, 0.25]);
        let offer = Utterance::silent(&DialogAct::priced(Intent::Offer, 0.5), &scale(), 0.5);
        assert_eq!(style_features(&offer), [0.0; 3]);
    }

    proptest! {
        #[test]
        fn generate_then_parse_is_identity(idx in 0usize..15, price in 0.0f64..=1.0, seed in any::<u64>()) {
            let intent = Intent::ALL[idx];
            let act = if intent.requires_price() { DialogAct::priced(intent, price) } else { DialogAct::bare(intent) };
            let mut rng = SimRng::seed_from_u64(seed);
            let u = TemplateBank::builtin().generate(&state(), &act, vec![], &mut rng, GenerationMode::Stochastic);
            prop_assert_eq!(parse(TemplateBank::builtin(), &u).unwrap(), act);
        }

        #[test]
        fn style_features_ignore_token_order(mut words in proptest::collection::vec(0usize..12, 0..6), seed in any::<u64>()) {
            let lex: Vec<&str> = crate::populations::COOPERATIVE_WORDS.iter().chain(crate::populations::COMPETITIVE_WORDS.iter()).copied().collect();
            let mut u = Utterance::silent(&DialogAct::bare(Intent::Inform), &scale(), 0.1);
            u.template_id = Some(0);
            u.style_tokens = words.iter().map(|&w| StyleToken::new(lex[w])).collect();
            let before = style_features(&u);
            let mut rng = SimRng::seed_from_u64(seed);
            use rand::seq::SliceRandom;
            words.shuffle(&mut rng);
            u.style_tokens = words.iter().map(|&w| StyleToken::new(lex[w])).collect();
            prop_assert_eq!(before, style_features(&u));
        }
    }
}
