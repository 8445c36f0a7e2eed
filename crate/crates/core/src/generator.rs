//! Template-based utterance generation.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{DialogState, PriceScale};
use crate::ontology::{DialogAct, Intent};
use crate::populations::StyleToken;
use crate::SimRng;

/// Minimum number of templates each speaking intent must have.
pub const MIN_TEMPLATES: usize = 10;

const PRICE_SLOT: &str = "{price}";
const DEFAULT_BANK: &str = include_str!("../assets/templates.txt");

/// A rendered move. Silent acts carry no template id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub template_id: Option<u32>,
    pub intent: Intent,
    pub rendered_price: Option<f64>,
    #[serde(default)]
    pub style_tokens: Vec<StyleToken>,
    pub text: String,
    /// Dialog position of the utterance, `turn / max_turns`.
    #[serde(default)]
    pub position: f64,
}

impl Utterance {
    /// The no-utterance marker for offer/accept/reject/quit.
    pub fn silent(act: &DialogAct, scale: &PriceScale, position: f64) -> Self {
        let text = match act.price {
            Some(p) => format!(
                "{}({})",
                act.intent.name().to_uppercase(),
                format_currency(scale.to_currency(p))
            ),
            None => act.intent.name().to_uppercase(),
        };
        Utterance {
            template_id: None,
            intent: act.intent,
            rendered_price: act.price,
            style_tokens: Vec::new(),
            text,
            position,
        }
    }

    pub fn is_silent(&self) -> bool {
        self.template_id.is_none()
    }
}

/// `$43` for whole amounts, `$43.50` otherwise.
pub fn format_currency(amount: f64) -> String {
    let cents = (amount * 100.0).round() as i64;
    if cents % 100 == 0 {
        format!("${}", cents / 100)
    } else {
        format!("${}.{:02}", cents / 100, (cents % 100).abs())
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("template bank line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("template bank is incomplete: {0}")]
    Incomplete(String),
    #[error("no template {id} for {intent}")]
    UnknownTemplate { intent: Intent, id: u32 },
    #[error("cannot read template bank: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    /// Always template 0.
    #[default]
    Deterministic,
    /// Uniform over the intent's templates.
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: u32,
    pub text: String,
}

/// Per-intent template lists, ordered by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateBank {
    templates: BTreeMap<Intent, Vec<Template>>,
}

impl TemplateBank {
    /// Parses `intent<TAB>id<TAB>text` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, GenError> {
        let mut templates: BTreeMap<Intent, Vec<Template>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |message: String| GenError::Malformed {
                line: i + 1,
                message,
            };
            let mut fields = line.splitn(3, '\t');
            let (Some(intent), Some(id), Some(body)) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(malformed("expected three tab-separated fields".into()));
            };
            let intent: Intent = intent.parse().map_err(|_| malformed(format!("unknown intent {intent:?}")))?;
            let id: u32 = id.parse().map_err(|_| malformed(format!("bad template id {id:?}")))?;
            if intent.is_silent() {
                return Err(malformed(format!("{intent} has no utterance text")));
            }
            if intent.requires_price() != body.contains(PRICE_SLOT) {
                return Err(malformed(format!("price slot mismatch for {intent}")));
            }
            let list = templates.entry(intent).or_default();
            if list.iter().any(|t| t.id == id) {
                return Err(malformed(format!("duplicate template {intent}/{id}")));
            }
            list.push(Template {
                id,
                text: body.to_string(),
            });
        }
        for list in templates.values_mut() {
            list.sort_by_key(|t| t.id);
        }
        let bank = TemplateBank { templates };
        bank.validate()?;
        Ok(bank)
    }

    pub fn load(path: &Path) -> Result<Self, GenError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The bundled bank, parsed once.
    pub fn builtin() -> &'static TemplateBank {
        static BANK: OnceLock<TemplateBank> = OnceLock::new();
        BANK.get_or_init(|| TemplateBank::parse(DEFAULT_BANK).expect("bundled templates are valid"))
    }

    fn validate(&self) -> Result<(), GenError> {
        for intent in Intent::ALL.into_iter().filter(|i| !i.is_silent()) {
            let count = self.templates.get(&intent).map_or(0, Vec::len);
            if count < MIN_TEMPLATES {
                return Err(GenError::Incomplete(format!(
                    "{intent} has {count} templates, need {MIN_TEMPLATES}"
                )));
            }
        }
        Ok(())
    }

    pub fn templates(&self, intent: Intent) -> &[Template] {
        self.templates.get(&intent).map_or(&[], Vec::as_slice)
    }

    pub fn get(&self, intent: Intent, id: u32) -> Option<&Template> {
        self.templates(intent).iter().find(|t| t.id == id)
    }

    /// Renders `act` with a specific template.
    pub fn render(
        &self,
        act: &DialogAct,
        template: &Template,
        scale: &PriceScale,
        style_tokens: Vec<StyleToken>,
        position: f64,
    ) -> Utterance {
        let mut body = match act.price {
            Some(p) => template.text.replace(PRICE_SLOT, &format_currency(scale.to_currency(p))),
            None => template.text.clone(),
        };
        if !style_tokens.is_empty() {
            let words: Vec<&str> = style_tokens.iter().map(StyleToken::as_str).collect();
            body = format!("{}, {}", words.join(" "), body);
        }
        Utterance {
            template_id: Some(template.id),
            intent: act.intent,
            rendered_price: act.price,
            style_tokens,
            text: body,
            position,
        }
    }

    /// Renders the utterance for `act` at the current point of `state`.
    pub fn generate(
        &self,
        state: &DialogState,
        act: &DialogAct,
        style_tokens: Vec<StyleToken>,
        rng: &mut SimRng,
        mode: GenerationMode,
    ) -> Utterance {
        let scale = state.scenario.scale();
        let position = position_of(state.turn_index(), state.max_turns);
        if act.intent.is_silent() {
            return Utterance::silent(act, &scale, position);
        }
        let options = self.templates(act.intent);
        let template = match mode {
            GenerationMode::Deterministic => &options[0],
            GenerationMode::Stochastic => &options[rng.gen_range(0..options.len().min(MIN_TEMPLATES))],
        };
        self.render(act, template, &scale, style_tokens, position)
    }

    /// The first `k` templates for `act`, uniformly weighted. Silent acts have
    /// the marker as their only support point.
    pub fn enumerate_support(
        &self,
        state: &DialogState,
        act: &DialogAct,
        k: usize,
    ) -> Vec<(Utterance, f64)> {
        let scale = state.scenario.scale();
        let position = position_of(state.turn_index(), state.max_turns);
        if act.intent.is_silent() {
            return vec![(Utterance::silent(act, &scale, position), 1.0)];
        }
        let options = self.templates(act.intent);
        let k = k.clamp(1, options.len());
        let p = 1.0 / k as f64;
        options[..k]
            .iter()
            .map(|t| (self.render(act, t, &scale, Vec::new(), position), p))
            .collect()
    }
}

pub fn position_of(turn: usize, max_turns: usize) -> f64 {
    if max_turns == 0 {
        0.0
    } else {
        turn as f64 / max_turns as f64
    }
}
