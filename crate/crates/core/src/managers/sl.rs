use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::guard::{guard, GuardConfig};
use super::nets::{NetConfig, PolicyNet};
use super::{sample_index, TrainError};
use crate::environment::{DialogState, Role};
use crate::features::history_features;
use crate::neural::{sl_loss, Adam, AdamConfig, Module, NeuralError};
use crate::ontology::{legal_responses, DialogAct, Intent, IntentSet};
use crate::populations::ChatIntentModel;
use crate::rollout::{Episode, Negotiator};
use crate::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Weight of the squared price error.
    pub alpha: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            alpha: 1.0,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            validation_fraction: 0.1,
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlReport {
    pub initial_validation_loss: f64,
    pub train_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
    pub best_epoch: usize,
}

/// Summed act loss of every move `observer` made in `episode`; accumulates
/// gradients when `train` is set. Returns `(loss, moves)`.
pub fn sequence_loss(
    net: &mut PolicyNet,
    episode: &Episode,
    observer: Role,
    alpha: f64,
    train: bool,
) -> (f64, usize) {
    let history = &episode.state.history;
    let feats = history_features(history, observer);
    let enc = net.encoder.forward(&feats);
    let mut dstates = vec![vec![0.0; net.encoder.hidden()]; feats.len() + 1];
    let mut total = 0.0;
    let mut count = 0;
    for (t, entry) in history.iter().enumerate() {
        if entry.agent != observer {
            continue;
        }
        let previous = t.checked_sub(1).map(|p| &history[p].act);
        let mask = legal_responses(previous).expect("recorded dialogs are valid").mask();
        let head = net.head.forward(&enc.states()[t]);
        let out = head.output();
        let target_price = entry.act.price.map(|p| observer.utility(p));
        let l = sl_loss(
            &out[..Intent::COUNT],
            out[Intent::COUNT],
            entry.act.intent.index(),
            target_price,
            &mask,
            alpha,
        );
        total += l.loss;
        count += 1;
        if train {
            let mut dy = l.dlogits;
            dy.push(l.dprice);
            let dh = net.head.backward(&head, &dy);
            dstates[t] = dh;
        }
    }
    if train && count > 0 {
        net.encoder.backward(&enc, &dstates);
    }
    (total, count)
}

fn mean_loss(net: &mut PolicyNet, items: &[(usize, Role)], corpus: &[Episode], alpha: f64) -> f64 {
    let (mut total, mut count) = (0.0, 0);
    for &(i, role) in items {
        let (l, c) = sequence_loss(net, &corpus[i], role, alpha, false);
        total += l;
        count += c;
    }
    total / count.max(1) as f64
}

/// Fits a policy to every move of both sides of the corpus, keeping the
/// epoch with the lowest validation loss.
pub fn train_sl(corpus: &[Episode], config: &TrainConfig) -> Result<(PolicyNet, SlReport), TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut rng = SimRng::seed_from_u64(config.seed);
    let mut net = PolicyNet::new(&config.net, &mut rng);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if corpus.len() < 2 {
        0
    } else {
        ((corpus.len() as f64 * config.validation_fraction).round() as usize).min(corpus.len() - 1)
    };
    let expand = |ids: &[usize]| -> Vec<(usize, Role)> {
        ids.iter().flat_map(|&i| [(i, Role::Buyer), (i, Role::Seller)]).collect()
    };
    let mut train = expand(&order[n_val..]);
    let validation = if n_val == 0 { train.clone() } else { expand(&order[..n_val]) };

    let initial = mean_loss(&mut net, &validation, corpus, config.alpha);
    let mut report = SlReport {
        initial_validation_loss: initial,
        train_losses: Vec::new(),
        validation_losses: Vec::new(),
        best_epoch: 0,
    };
    let mut best = (initial, net.clone());
    let mut adam = Adam::new(config.adam());
    for epoch in 0..config.epochs {
        train.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_count) = (0.0, 0);
        for batch in train.chunks(config.batch_size.max(1)) {
            net.zero_grad();
            let (mut loss, mut count) = (0.0, 0);
            for &(i, role) in batch {
                let (l, c) = sequence_loss(&mut net, &corpus[i], role, config.alpha, true);
                loss += l;
                count += c;
            }
            if count == 0 {
                continue;
            }
            if !loss.is_finite() {
                return Err(NeuralError::NonFiniteLoss(loss).into());
            }
            net.scale_grad(1.0 / count as f64);
            adam.step(&mut net)?;
            epoch_loss += loss;
            epoch_count += count;
        }
        let val = mean_loss(&mut net, &validation, corpus, config.alpha);
        tracing::debug!(epoch, train = epoch_loss / epoch_count.max(1) as f64, val, "sl epoch");
        report.train_losses.push(epoch_loss / epoch_count.max(1) as f64);
        report.validation_losses.push(val);
        if val < best.0 {
            best = (val, net.clone());
            report.best_epoch = epoch + 1;
        }
    }
    Ok((best.1, report))
}

/// Samples an intent from the policy, takes the price head's mean, then
/// applies the guard.
pub fn sl_act(state: &DialogState, role: Role, policy: &PolicyNet, guard_config: &GuardConfig, rng: &mut SimRng) -> DialogAct {
    let out = policy.output(state, role);
    let probs = PolicyNet::intent_probs(&out, state);
    let intent = Intent::ALL[sample_index(&probs, rng)];
    let act = if intent.requires_price() {
        DialogAct::priced(intent, role.price_for_utility(out.price_mean))
    } else {
        DialogAct::bare(intent)
    };
    guard(act, state, role, guard_config).0
}

/// The SL+rule manager.
#[derive(Debug, Clone)]
pub struct SlAgent {
    pub policy: Arc<PolicyNet>,
    pub guard: GuardConfig,
}

impl SlAgent {
    pub fn new(policy: Arc<PolicyNet>) -> Self {
        SlAgent {
            policy,
            guard: GuardConfig::sl_rule(),
        }
    }
}

impl Negotiator for SlAgent {
    fn name(&self) -> String {
        "sl-rule".into()
    }

    fn act(&self, state: &DialogState, role: Role, rng: &mut SimRng) -> DialogAct {
        sl_act(state, role, &self.policy, &self.guard, rng)
    }
}

/// Lets populations pick their non-price intents from an SL policy.
impl ChatIntentModel for PolicyNet {
    fn chat_intent(&self, state: &DialogState, role: Role, allowed: IntentSet, rng: &mut SimRng) -> Intent {
        let out = self.output(state, role);
        let legal = legal_responses(state.last_act()).unwrap_or_default();
        let mask: Vec<bool> = Intent::ALL
            .iter()
            .map(|i| allowed.contains(*i) && legal.contains(*i))
            .collect();
        if !mask.iter().any(|m| *m) {
            return Intent::Inform;
        }
        let probs = crate::neural::softmax_masked(&out.intent_logits, &mask);
        Intent::ALL[sample_index(&probs, rng)]
    }
}
