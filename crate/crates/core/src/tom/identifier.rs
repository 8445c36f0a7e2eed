use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::TypeDistribution;
use crate::environment::{DialogState, HistoryEntry, Role};
use crate::features::{identifier_features, ID_DIM};
use crate::managers::{NetConfig, TrainConfig, TrainError};
use crate::neural::{join, softmax, Activation, Adam, Encoder, Mlp, Module, NeuralError, Param};
use crate::populations::NUM_POPULATIONS;
use crate::rollout::Episode;
use crate::SimRng;

/// Opponent-type classifier over the dialog so far, including the style
/// tokens of each utterance. The last hidden layer of the head is the
/// dialog embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifierNet {
    pub encoder: Encoder,
    pub head: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifierReport {
    pub validation_losses: Vec<f64>,
    pub best_epoch: usize,
    /// `(opponent turns seen, top-1, top-3)` on the validation dialogs.
    pub accuracy_by_turns: Vec<(usize, f64, f64)>,
}

impl IdentifierNet {
    pub fn new(config: &NetConfig, rng: &mut SimRng) -> Self {
        IdentifierNet {
            encoder: Encoder::new(ID_DIM, config.hidden, config.layers, rng),
            head: Mlp::new(&[config.hidden, config.head_hidden, NUM_POPULATIONS], Activation::Tanh, rng),
        }
    }

    /// Type distributions at each prefix length in `ts`. Prefixes without
    /// an opponent utterance get the uniform distribution.
    pub fn distributions_at(&self, history: &[HistoryEntry], observer: Role, ts: &[usize]) -> Vec<TypeDistribution> {
        let last = ts.iter().copied().max().unwrap_or(0);
        let feats: Vec<Vec<f64>> = history[..last].iter().map(|e| identifier_features(e, observer)).collect();
        let enc = self.encoder.forward(&feats);
        ts.iter()
            .map(|&t| {
                if history[..t].iter().any(|e| e.agent != observer) {
                    TypeDistribution(softmax(self.head.forward(&enc.states()[t]).output()))
                } else {
                    TypeDistribution::default()
                }
            })
            .collect()
    }

    pub fn identify(&self, state: &DialogState, observer: Role) -> TypeDistribution {
        let t = state.history.len();
        self.distributions_at(&state.history, observer, &[t]).remove(0)
    }

    /// Penultimate-layer activation for the whole history.
    pub fn embedding(&self, history: &[HistoryEntry], observer: Role) -> Vec<f64> {
        let feats: Vec<Vec<f64>> = history.iter().map(|e| identifier_features(e, observer)).collect();
        let h = self.encoder.encode(&feats);
        self.head.forward(&h).penultimate().to_vec()
    }
}

impl Module for IdentifierNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// Prefix lengths right after each opponent utterance.
fn label_points(episode: &Episode) -> Vec<usize> {
    episode
        .state
        .history
        .iter()
        .enumerate()
        .filter(|(_, e)| e.agent != episode.agent)
        .map(|(j, _)| j + 1)
        .collect()
}

/// Cross-entropy summed over the labelled prefixes of one dialog.
pub fn identifier_loss(net: &mut IdentifierNet, episode: &Episode, train: bool) -> (f64, usize) {
    let Some(label) = episode.opponent_population else {
        return (0.0, 0);
    };
    let label = label as usize;
    let points = label_points(episode);
    let Some(&last) = points.last() else {
        return (0.0, 0);
    };
    let feats: Vec<Vec<f64>> = episode.state.history[..last]
        .iter()
        .map(|e| identifier_features(e, episode.agent))
        .collect();
    let enc = net.encoder.forward(&feats);
    let mut dstates = vec![vec![0.0; net.encoder.hidden()]; feats.len() + 1];
    let mut total = 0.0;
    for &t in &points {
        let head = net.head.forward(&enc.states()[t]);
        let p = softmax(head.output());
        total -= p[label].max(1e-300).ln();
        if train {
            let mut dy = p;
            dy[label] -= 1.0;
            dstates[t] = net.head.backward(&head, &dy);
        }
    }
    if train {
        net.encoder.backward(&enc, &dstates);
    }
    (total, points.len())
}

/// Top-1 and top-3 accuracy at the prefix holding `turns` opponent
/// utterances, over dialogs that reach that many.
pub fn identifier_accuracy(net: &IdentifierNet, episodes: &[Episode], turns: usize) -> (f64, f64, usize) {
    let (mut top1, mut top3, mut n) = (0usize, 0usize, 0usize);
    for ep in episodes {
        let (Some(label), Some(&t)) = (ep.opponent_population, label_points(ep).get(turns.saturating_sub(1))) else {
            continue;
        };
        let z = net.distributions_at(&ep.state.history, ep.agent, &[t]).remove(0);
        top1 += z.in_top(label as usize, 1) as usize;
        top3 += z.in_top(label as usize, 3) as usize;
        n += 1;
    }
    let d = n.max(1) as f64;
    (top1 as f64 / d, top3 as f64 / d, n)
}

fn mean_loss(net: &mut IdentifierNet, episodes: &[&Episode]) -> f64 {
    let (mut total, mut count) = (0.0, 0);
    for ep in episodes {
        let (l, c) = identifier_loss(net, ep, false);
        total += l;
        count += c;
    }
    total / count.max(1) as f64
}

/// Supervised training on dialogs labelled with the opponent's population,
/// keeping the epoch with the lowest validation loss.
pub fn train_identifier(corpus: &[Episode], config: &TrainConfig) -> Result<(IdentifierNet, IdentifierReport), TrainError> {
    let labelled: Vec<&Episode> = corpus.iter().filter(|e| e.opponent_population.is_some()).collect();
    if labelled.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut rng = SimRng::seed_from_u64(config.seed);
    let mut net = IdentifierNet::new(&config.net, &mut rng);
    let mut order = labelled.clone();
    order.shuffle(&mut rng);
    let n_val = ((order.len() as f64 * config.validation_fraction).round() as usize).min(order.len().saturating_sub(1));
    let (validation, train) = order.split_at(n_val);
    let validation: Vec<&Episode> = if validation.is_empty() { train.to_vec() } else { validation.to_vec() };
    let mut train = train.to_vec();

    let mut best = (mean_loss(&mut net, &validation), net.clone());
    let mut report = IdentifierReport {
        validation_losses: Vec::new(),
        best_epoch: 0,
        accuracy_by_turns: Vec::new(),
    };
    let mut adam = Adam::new(config.adam());
    for epoch in 0..config.epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(config.batch_size.max(1)) {
            net.zero_grad();
            let (mut loss, mut count) = (0.0, 0);
            for ep in batch {
                let (l, c) = identifier_loss(&mut net, ep, true);
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
        }
        let val = mean_loss(&mut net, &validation);
        tracing::debug!(epoch, val, "identifier epoch");
        report.validation_losses.push(val);
        if val < best.0 {
            best = (val, net.clone());
            report.best_epoch = epoch + 1;
        }
    }
    let net = best.1;
    let owned: Vec<Episode> = validation.iter().map(|e| (*e).clone()).collect();
    report.accuracy_by_turns = (1..=8)
        .map(|k| {
            let (a1, a3, _) = identifier_accuracy(&net, &owned, k);
            (k, a1, a3)
        })
        .collect();
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::TemplateBank;
    use crate::managers::{RlAgent, PolicyNet};
    use crate::neural::grad_check;
    use crate::populations::{default_roster, PopulationAgent};
    use crate::rollout::{play, MatchConfig};
    use std::sync::Arc;

    fn tiny() -> NetConfig {
        NetConfig {
            hidden: 5,
            layers: 2,
            head_hidden: 6,
        }
    }

    fn episode(seed: u64, population: u8) -> Episode {
        let mut rng = SimRng::seed_from_u64(seed);
        let agent = RlAgent::new(Arc::new(PolicyNet::new(&tiny(), &mut rng)), 0.1);
        let opp = PopulationAgent::new(default_roster().get(population).unwrap().clone());
        play(&agent, &opp, &MatchConfig::default(), seed, TemplateBank::builtin()).unwrap()
    }

    #[test]
    fn uniform_before_any_opponent_move() {
        let mut rng = SimRng::seed_from_u64(0);
        let net = IdentifierNet::new(&tiny(), &mut rng);
        let ep = episode(1, 5);
        let first_opponent = ep.state.history.iter().position(|e| e.agent != ep.agent).unwrap();
        let zs = net.distributions_at(&ep.state.history, ep.agent, &[0, first_opponent, first_opponent + 1]);
        assert_eq!(zs[0], TypeDistribution::default());
        assert_eq!(zs[1], TypeDistribution::default());
        assert_ne!(zs[2], TypeDistribution::default());
        assert!((zs[2].0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identifier_gradients_match() {
        let ep = episode(2, 3);
        let mut rng = SimRng::seed_from_u64(5);
        let mut net = IdentifierNet::new(&tiny(), &mut rng);
        let report = grad_check(&mut net, |m: &mut IdentifierNet| identifier_loss(m, &ep, true).0, 1e-5, 200, &mut rng);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn embedding_has_head_width() {
        let mut rng = SimRng::seed_from_u64(0);
        let net = IdentifierNet::new(&tiny(), &mut rng);
        let ep = episode(4, 6);
        assert_eq!(net.embedding(&ep.state.history, ep.agent).len(), 6);
    }
}
