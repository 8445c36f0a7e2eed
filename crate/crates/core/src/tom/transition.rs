use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{IdentifierNet, TypeDistribution};
use crate::environment::{DialogState, HistoryEntry, Role};
use crate::features::{act_sparse, grid_price, history_features, last_style_of, ACT_DIM, PRICE_GRID};
use crate::generator::position_of;
use crate::managers::{NetConfig, TrainConfig, TrainError};
use crate::neural::{join, sigmoid, sl_loss, softmax_masked, Activation, Adam, Encoder, Mlp, Module, NeuralError, Param};
use crate::ontology::{legal_responses, DialogAct, Intent};
use crate::parser::STYLE_DIM;
use crate::populations::NUM_POPULATIONS;
use crate::rollout::Episode;
use crate::SimRng;

/// What the opponent model is conditioned on besides the history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TomMode {
    /// Style features of the opponent's last utterance.
    Implicit,
    /// Identifier's distribution over opponent types.
    Explicit,
}

impl TomMode {
    pub fn condition_dim(self) -> usize {
        match self {
            TomMode::Implicit => STYLE_DIM,
            TomMode::Explicit => NUM_POPULATIONS,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TomMode::Implicit => "implicit",
            TomMode::Explicit => "explicit",
        }
    }
}

/// Conditioning vector for one decision.
#[derive(Debug, Clone, PartialEq)]
pub enum Conditioning {
    Style([f64; STYLE_DIM]),
    Types(TypeDistribution),
}

impl Conditioning {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Conditioning::Style(s) => s.to_vec(),
            Conditioning::Types(z) => z.0.clone(),
        }
    }

    /// Conditioning for the agent's decisions at each prefix length in `ts`.
    pub fn at(mode: TomMode, identifier: Option<&IdentifierNet>, history: &[HistoryEntry], agent: Role, ts: &[usize]) -> Vec<Conditioning> {
        match mode {
            TomMode::Implicit => ts
                .iter()
                .map(|&t| Conditioning::Style(last_style_of(&history[..t], agent.other())))
                .collect(),
            TomMode::Explicit => match identifier {
                Some(id) => id.distributions_at(history, agent, ts).into_iter().map(Conditioning::Types).collect(),
                None => ts.iter().map(|_| Conditioning::Types(TypeDistribution::default())).collect(),
            },
        }
    }
}

/// Predicted opponent replies with probabilities; prices are normalized.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResponseDistribution {
    pub outcomes: Vec<(DialogAct, f64)>,
}

impl ResponseDistribution {
    /// Joint distribution over legal reply intents and grid prices. Priced
    /// intents spread their mass over the grid by a Gaussian around the
    /// predicted price; entries under `threshold` are dropped and the rest
    /// renormalised.
    pub fn build(logits: &[f64], price_mean: f64, sigma: f64, own: &DialogAct, agent: Role, threshold: f64) -> Self {
        let mask = legal_responses(Some(own)).expect("candidate acts are valid").mask();
        let probs = softmax_masked(logits, &mask);
        let center = agent.price_for_utility(price_mean);
        let weights: Vec<f64> = (0..PRICE_GRID)
            .map(|k| {
                let d = (grid_price(k) - center) / sigma;
                (-0.5 * d * d).exp()
            })
            .collect();
        let z: f64 = weights.iter().sum();
        let mut outcomes = Vec::new();
        let mut best = (DialogAct::bare(Intent::Inform), -1.0);
        for (i, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let intent = Intent::ALL[i];
            if intent.requires_price() {
                for (k, w) in weights.iter().enumerate() {
                    let q = p * w / z;
                    let act = DialogAct::priced(intent, grid_price(k));
                    if q > best.1 {
                        best = (act, q);
                    }
                    if q >= threshold {
                        outcomes.push((act, q));
                    }
                }
            } else {
                let act = DialogAct::bare(intent);
                if p > best.1 {
                    best = (act, p);
                }
                if p >= threshold {
                    outcomes.push((act, p));
                }
            }
        }
        if outcomes.is_empty() {
            outcomes.push((best.0, 1.0));
        }
        let total: f64 = outcomes.iter().map(|(_, p)| p).sum();
        for o in &mut outcomes {
            o.1 /= total;
        }
        ResponseDistribution { outcomes }
    }
}

/// Opponent transition model `T(r | s, a, c)`: encoder over the history
/// before the agent's act, then a head over `[state, own act, conditioning]`
/// giving reply-intent logits and the reply price in agent utility.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionNet {
    pub mode: TomMode,
    pub encoder: Encoder,
    pub head: Mlp,
    /// Spread of the predicted price, fitted on validation residuals.
    pub price_sigma: f64,
}

impl TransitionNet {
    pub fn new(mode: TomMode, config: &NetConfig, rng: &mut SimRng) -> Self {
        TransitionNet {
            mode,
            encoder: Encoder::new(ACT_DIM, config.hidden, config.layers, rng),
            head: Mlp::new(
                &[config.hidden + ACT_DIM + mode.condition_dim(), config.head_hidden, Intent::COUNT + 1],
                Activation::Tanh,
                rng,
            ),
            price_sigma: 0.1,
        }
    }

    /// First-layer pre-activation with the own-act slot left empty.
    pub fn base_input(&self, state: &[f64], condition: &[f64]) -> Vec<f64> {
        let first = &self.head.layers[0];
        let h = self.encoder.hidden();
        let mut out = first.b.value.data.clone();
        first.w.value.matvec_cols_add(0, state, &mut out);
        first.w.value.matvec_cols_add(h + ACT_DIM, condition, &mut out);
        out
    }

    /// Reply distribution for the own act whose sparse features are `own`,
    /// given a [`TransitionNet::base_input`].
    pub fn predict_from_base(&self, base: &[f64], own: &[(usize, f64)], act: &DialogAct, agent: Role, threshold: f64) -> ResponseDistribution {
        let first = &self.head.layers[0].w.value;
        let h = self.encoder.hidden();
        let mut x = base.to_vec();
        for &(i, v) in own {
            first.add_column(h + i, v, &mut x);
        }
        let out = self.head.forward_from_first_linear(&x);
        let mean = sigmoid(out[Intent::COUNT]);
        ResponseDistribution::build(&out[..Intent::COUNT], mean, self.price_sigma, act, agent, threshold)
    }

    /// Reply distribution if `agent` plays `act` now.
    pub fn predict(&self, state: &DialogState, agent: Role, act: &DialogAct, condition: &Conditioning, threshold: f64) -> ResponseDistribution {
        let feats = history_features(&state.history, agent);
        let s = self.encoder.encode(&feats);
        let base = self.base_input(&s, &condition.to_vec());
        let position = position_of(state.turn_index(), state.max_turns);
        let own = act_sparse(agent, act, position, agent);
        self.predict_from_base(&base, &own, act, agent, threshold)
    }
}

impl Module for TransitionNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// Agent decisions with an opponent reply, and their conditioning.
#[derive(Debug, Clone)]
pub(crate) struct TransitionSample {
    pub episode: usize,
    pub ts: Vec<usize>,
    pub conditions: Vec<Vec<f64>>,
}

pub(crate) fn samples_of(corpus: &[Episode], mode: TomMode, identifier: Option<&IdentifierNet>) -> Vec<TransitionSample> {
    corpus
        .iter()
        .enumerate()
        .filter_map(|(i, ep)| {
            let h = &ep.state.history;
            let ts: Vec<usize> = (0..h.len().saturating_sub(1)).filter(|&t| h[t].agent == ep.agent).collect();
            if ts.is_empty() {
                return None;
            }
            let conditions = Conditioning::at(mode, identifier, h, ep.agent, &ts).iter().map(Conditioning::to_vec).collect();
            Some(TransitionSample { episode: i, ts, conditions })
        })
        .collect()
}

/// Transition loss summed over every agent decision of `episode` that drew
/// a reply; accumulates gradients when `train` is set.
pub fn episode_transition_loss(
    net: &mut TransitionNet,
    episode: &Episode,
    identifier: Option<&IdentifierNet>,
    alpha: f64,
    train: bool,
) -> f64 {
    samples_of(std::slice::from_ref(episode), net.mode, identifier)
        .iter()
        .map(|s| transition_loss(net, episode, s, alpha, train).0)
        .sum()
}

/// Loss summed over the sample's decisions. Returns `(loss, decisions,
/// squared price errors summed, priced decisions)`.
pub(crate) fn transition_loss(net: &mut TransitionNet, episode: &Episode, sample: &TransitionSample, alpha: f64, train: bool) -> (f64, usize, f64, usize) {
    let h = &episode.state.history;
    let agent = episode.agent;
    let feats = history_features(h, agent);
    let last = *sample.ts.last().expect("non-empty");
    let enc = net.encoder.forward(&feats[..last]);
    let hidden = net.encoder.hidden();
    let mut dstates = vec![vec![0.0; hidden]; last + 1];
    let (mut loss, mut sq, mut priced) = (0.0, 0.0, 0usize);
    for (&t, cond) in sample.ts.iter().zip(&sample.conditions) {
        let mut x = enc.states()[t].clone();
        x.extend_from_slice(&feats[t]);
        x.extend_from_slice(cond);
        let head = net.head.forward(&x);
        let out = head.output();
        let reply = &h[t + 1].act;
        let mask = legal_responses(Some(&h[t].act)).expect("recorded dialogs are valid").mask();
        let target_price = reply.price.map(|p| agent.utility(p));
        let l = sl_loss(&out[..Intent::COUNT], out[Intent::COUNT], reply.intent.index(), target_price, &mask, alpha);
        loss += l.loss;
        if let Some(y) = target_price {
            let e = sigmoid(out[Intent::COUNT]) - y;
            sq += e * e;
            priced += 1;
        }
        if train {
            let mut dy = l.dlogits;
            dy.push(l.dprice);
            let dx = net.head.backward(&head, &dy);
            dstates[t] = dx[..hidden].to_vec();
        }
    }
    if train {
        net.encoder.backward(&enc, &dstates);
    }
    (loss, sample.ts.len(), sq, priced)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub mode: TomMode,
    pub train_dialogs: usize,
    pub initial_validation_loss: f64,
    pub validation_losses: Vec<f64>,
    pub best_epoch: usize,
    /// Mean squared reply-price error of the selected model on validation.
    pub validation_price_mse: f64,
    pub price_sigma: f64,
}

fn evaluate(net: &mut TransitionNet, corpus: &[Episode], samples: &[&TransitionSample], alpha: f64) -> (f64, f64) {
    let (mut loss, mut n, mut sq, mut priced) = (0.0, 0, 0.0, 0);
    for s in samples {
        let (l, c, e, p) = transition_loss(net, &corpus[s.episode], s, alpha, false);
        loss += l;
        n += c;
        sq += e;
        priced += p;
    }
    (loss / n.max(1) as f64, sq / priced.max(1) as f64)
}

/// Fits the opponent model on agent decisions from `corpus`. The validation
/// split depends only on the seed, so models trained on different
/// `data_fraction`s of the remaining dialogs are compared on the same set.
pub fn train_transition(
    corpus: &[Episode],
    mode: TomMode,
    identifier: Option<&IdentifierNet>,
    config: &TrainConfig,
    data_fraction: f64,
) -> Result<(TransitionNet, TransitionReport), TrainError> {
    if mode == TomMode::Explicit && identifier.is_none() {
        return Err(TrainError::Invalid("explicit opponent model needs an identifier".into()));
    }
    let samples = samples_of(corpus, mode, identifier);
    if samples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut rng = SimRng::seed_from_u64(config.seed);
    let mut order: Vec<&TransitionSample> = samples.iter().collect();
    order.shuffle(&mut rng);
    let n_val = ((order.len() as f64 * config.validation_fraction).round() as usize).min(order.len().saturating_sub(1));
    let (validation, rest) = order.split_at(n_val);
    let keep = ((rest.len() as f64 * data_fraction.clamp(0.0, 1.0)).ceil() as usize).clamp(1, rest.len());
    let mut train: Vec<&TransitionSample> = rest[..keep].to_vec();
    let validation: Vec<&TransitionSample> = if validation.is_empty() { train.clone() } else { validation.to_vec() };

    let mut net = TransitionNet::new(mode, &config.net, &mut rng);
    let (initial, initial_mse) = evaluate(&mut net, corpus, &validation, config.alpha);
    let mut best = (initial, initial_mse, net.clone());
    let mut report = TransitionReport {
        mode,
        train_dialogs: train.len(),
        initial_validation_loss: initial,
        validation_losses: Vec::new(),
        best_epoch: 0,
        validation_price_mse: initial_mse,
        price_sigma: 0.0,
    };
    let mut adam = Adam::new(config.adam());
    for epoch in 0..config.epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(config.batch_size.max(1)) {
            net.zero_grad();
            let (mut loss, mut count) = (0.0, 0);
            for s in batch {
                let (l, c, _, _) = transition_loss(&mut net, &corpus[s.episode], s, config.alpha, true);
                loss += l;
                count += c;
            }
            if !loss.is_finite() {
                return Err(NeuralError::NonFiniteLoss(loss).into());
            }
            net.scale_grad(1.0 / count.max(1) as f64);
            adam.step(&mut net)?;
        }
        let (val, mse) = evaluate(&mut net, corpus, &validation, config.alpha);
        tracing::debug!(epoch, val, mse, mode = mode.label(), "transition epoch");
        report.validation_losses.push(val);
        if val < best.0 {
            best = (val, mse, net.clone());
            report.best_epoch = epoch + 1;
        }
    }
    let mut net = best.2;
    report.validation_price_mse = best.1;
    net.price_sigma = best.1.sqrt().max(0.02);
    report.price_sigma = net.price_sigma;
    Ok((net, report))
}
