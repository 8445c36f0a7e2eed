use std::sync::Arc;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::guard::{guard, GuardConfig};
use super::nets::{NetConfig, PolicyNet, ValueNet};
use super::{sample_index, TrainError};
use crate::derive_seed;
use crate::environment::{reward, DialogState, HistoryEntry, Role};
use crate::features::history_features;
use crate::generator::TemplateBank;
use crate::neural::{softmax_masked, Adam, AdamConfig, Module, NeuralError};
use crate::ontology::{legal_responses, DialogAct, Intent};
use crate::populations::{PopulationAgent, PopulationRoster};
use crate::rollout::{play, Episode, MatchConfig, Negotiator};
use crate::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig {
    pub episodes: usize,
    pub batch_size: usize,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    /// Standard deviation of the Gaussian price policy, in utility units.
    pub price_sigma: f64,
    pub entropy_weight: f64,
    /// Batches of critic-only updates before the actor starts moving.
    pub critic_warmup_batches: usize,
    /// Evaluate for model selection every this many batches.
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub net: NetConfig,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            episodes: 5000,
            batch_size: 16,
            actor_learning_rate: 3e-4,
            critic_learning_rate: 1e-3,
            price_sigma: 0.1,
            entropy_weight: 0.01,
            critic_warmup_batches: 20,
            eval_every: 25,
            eval_episodes: 200,
            seed: 0,
            net: NetConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlReport {
    /// Mean training reward per batch.
    pub batch_rewards: Vec<f64>,
    /// `(batch, mean evaluation reward)` at each checkpoint.
    pub evaluations: Vec<(usize, f64)>,
    pub best_batch: usize,
    pub best_reward: f64,
}

/// One agent decision inside a [`Trajectory`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    /// History length when the decision was taken.
    pub t: usize,
    pub act: DialogAct,
    /// Zero except on the agent's final decision.
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub agent: Role,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn from_episode(episode: &Episode) -> Self {
        let agent = episode.agent;
        let mut steps: Vec<TrajectoryStep> = episode
            .state
            .history
            .iter()
            .enumerate()
            .filter(|(_, e)| e.agent == agent)
            .map(|(t, e)| TrajectoryStep {
                t,
                act: e.act,
                reward: 0.0,
            })
            .collect();
        if let Some(last) = steps.last_mut() {
            last.reward = reward(&episode.outcome, agent);
        }
        Trajectory { agent, steps }
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Actor-critic manager: samples intents from the policy and prices from a
/// Gaussian around the price head.
#[derive(Debug, Clone)]
pub struct RlAgent {
    pub policy: Arc<PolicyNet>,
    pub price_sigma: f64,
    pub guard: GuardConfig,
}

impl RlAgent {
    pub fn new(policy: Arc<PolicyNet>, price_sigma: f64) -> Self {
        RlAgent {
            policy,
            price_sigma,
            guard: GuardConfig::default(),
        }
    }
}

impl Negotiator for RlAgent {
    fn name(&self) -> String {
        "rl".into()
    }

    fn act(&self, state: &DialogState, role: Role, rng: &mut SimRng) -> DialogAct {
        let out = self.policy.output(state, role);
        let probs = PolicyNet::intent_probs(&out, state);
        let intent = Intent::ALL[sample_index(&probs, rng)];
        let act = if intent.requires_price() {
            let u = (out.price_mean + self.price_sigma * Distribution::<f64>::sample(&StandardNormal, rng)).clamp(0.0, 1.0);
            DialogAct::priced(intent, role.price_for_utility(u))
        } else {
            DialogAct::bare(intent)
        };
        guard(act, state, role, &self.guard).0
    }
}

/// Critic estimate of `state` from `role`'s side.
pub fn value(state: &DialogState, role: Role, net: &ValueNet) -> f64 {
    net.value_of(state, role)
}

/// Mean agent reward over `episodes` seeded dialogs, cycling through the
/// opponent ids.
pub fn evaluate_mean_reward(
    agent: &dyn Negotiator,
    roster: &PopulationRoster,
    opponents: &[u8],
    match_config: &MatchConfig,
    seed: u64,
    episodes: usize,
    bank: &TemplateBank,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for i in 0..episodes {
        let id = opponents[i % opponents.len()];
        let opp = PopulationAgent::new(
            roster
                .get(id)
                .ok_or_else(|| TrainError::Invalid(format!("unknown population {id}")))?
                .clone(),
        );
        let ep = play(agent, &opp, match_config, derive_seed(seed, i as u64), bank)?;
        total += ep.metrics.reward();
    }
    Ok(total / episodes.max(1) as f64)
}

/// Accumulates the gradient of `sum_k -A_k log pi(a_k | s_k) - c H_k` over
/// `steps = (t, act, advantage)` of `role` in `history`. Prices follow a
/// Gaussian of spread `sigma` around the price head.
pub fn policy_gradient(
    policy: &mut PolicyNet,
    history: &[HistoryEntry],
    role: Role,
    steps: &[(usize, DialogAct, f64)],
    sigma: f64,
    entropy_weight: f64,
) {
    let Some(last) = steps.iter().map(|s| s.0).max() else {
        return;
    };
    let feats = history_features(&history[..last], role);
    let enc = policy.encoder.forward(&feats);
    let mut dstates = vec![vec![0.0; policy.encoder.hidden()]; feats.len() + 1];
    let sigma2 = sigma * sigma;
    for &(t, act, advantage) in steps {
        let previous = t.checked_sub(1).map(|p| &history[p].act);
        let mask = legal_responses(previous).expect("valid dialog").mask();
        let head = policy.head.forward(&enc.states()[t]);
        let out = head.output();
        let probs = softmax_masked(&out[..Intent::COUNT], &mask);
        let entropy: f64 = probs.iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum();
        let mut dy = vec![0.0; Intent::COUNT + 1];
        let chosen = act.intent.index();
        for j in 0..Intent::COUNT {
            if !mask[j] {
                continue;
            }
            let indicator = if j == chosen { 1.0 } else { 0.0 };
            // d(-A log p)/dl plus d(-c H)/dl.
            dy[j] = advantage * (probs[j] - indicator);
            if probs[j] > 0.0 {
                dy[j] += entropy_weight * probs[j] * (probs[j].ln() + entropy);
            }
        }
        if let Some(p) = act.price {
            let mu = crate::neural::sigmoid(out[Intent::COUNT]);
            let u = role.utility(p);
            dy[Intent::COUNT] = -advantage * (u - mu) / sigma2 * mu * (1.0 - mu);
        }
        let dx = policy.head.backward(&head, &dy);
        for (d, g) in dstates[t].iter_mut().zip(dx) {
            *d += g;
        }
    }
    policy.encoder.backward(&enc, &dstates);
}

/// Accumulates actor and critic gradients for one episode; returns the
/// number of decisions used.
fn accumulate(
    policy: &mut PolicyNet,
    critic: &mut ValueNet,
    episode: &Episode,
    config: &RlConfig,
    update_actor: bool,
) -> usize {
    let traj = Trajectory::from_episode(episode);
    if traj.steps.is_empty() {
        return 0;
    }
    let role = traj.agent;
    let history = &episode.state.history;
    let feats = history_features(history, role);
    let ts: Vec<usize> = traj.steps.iter().map(|s| s.t).collect();
    let ret = traj.total_reward();

    let (venc, vheads) = critic.forward_at(&feats, &ts);
    let values: Vec<f64> = vheads.iter().map(|c| c.output()[0]).collect();
    let dvalues: Vec<f64> = values.iter().map(|v| 2.0 * (v - ret)).collect();
    critic.backward_at(&ts, &venc, &vheads, &dvalues);

    if update_actor {
        let steps: Vec<(usize, DialogAct, f64)> = traj
            .steps
            .iter()
            .enumerate()
            .map(|(k, step)| {
                let next = if k + 1 < traj.steps.len() { values[k + 1] } else { 0.0 };
                (step.t, step.act, step.reward + next - values[k])
            })
            .collect();
        policy_gradient(policy, history, role, &steps, config.price_sigma, config.entropy_weight);
    }
    traj.steps.len()
}

/// Actor-critic fine-tuning of an SL-initialised policy against the given
/// populations. Keeps the policy with the best periodic evaluation reward.
pub fn train_rl(
    initial: &PolicyNet,
    roster: &PopulationRoster,
    opponents: &[u8],
    match_config: &MatchConfig,
    config: &RlConfig,
    bank: &TemplateBank,
) -> Result<(PolicyNet, ValueNet, RlReport), TrainError> {
    if opponents.is_empty() {
        return Err(TrainError::Invalid("no opponents".into()));
    }
    let mut rng = SimRng::seed_from_u64(derive_seed(config.seed, 99));
    let mut policy = initial.clone();
    let mut critic = ValueNet::new(&config.net, &mut rng);
    let mut actor_opt = Adam::new(AdamConfig {
        learning_rate: config.actor_learning_rate,
        clip_norm: 5.0,
        ..Default::default()
    });
    let mut critic_opt = Adam::new(AdamConfig {
        learning_rate: config.critic_learning_rate,
        clip_norm: 5.0,
        ..Default::default()
    });
    let eval_seed = derive_seed(config.seed, 0xE7A1);
    let evaluate = |p: &PolicyNet| {
        let agent = RlAgent::new(Arc::new(p.clone()), config.price_sigma);
        evaluate_mean_reward(&agent, roster, opponents, match_config, eval_seed, config.eval_episodes, bank)
    };
    let batches = config.episodes / config.batch_size.max(1);
    let mut report = RlReport {
        batch_rewards: Vec::new(),
        evaluations: Vec::new(),
        best_batch: 0,
        best_reward: f64::NEG_INFINITY,
    };
    let mut best_policy = policy.clone();
    let mut best_critic = critic.clone();
    if batches == 0 {
        return Ok((policy, critic, report));
    }
    let mut episode_index = 0u64;
    for batch in 0..batches {
        let agent = RlAgent::new(Arc::new(policy.clone()), config.price_sigma);
        let mut episodes = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let seed = derive_seed(config.seed, episode_index);
            let id = opponents[(derive_seed(seed, 3) % opponents.len() as u64) as usize];
            let opp = PopulationAgent::new(roster.get(id).cloned().ok_or_else(|| TrainError::Invalid(format!("unknown population {id}")))?);
            episodes.push(play(&agent, &opp, match_config, seed, bank)?);
            episode_index += 1;
        }
        let update_actor = batch >= config.critic_warmup_batches;
        let mut decisions = 0;
        for ep in &episodes {
            decisions += accumulate(&mut policy, &mut critic, ep, config, update_actor);
        }
        let mean_reward = episodes.iter().map(|e| e.metrics.reward()).sum::<f64>() / episodes.len() as f64;
        report.batch_rewards.push(mean_reward);
        if decisions > 0 {
            let scale = 1.0 / decisions as f64;
            critic.scale_grad(scale);
            critic_opt.step(&mut critic)?;
            if update_actor {
                policy.scale_grad(scale);
                actor_opt.step(&mut policy)?;
            }
        }
        if !mean_reward.is_finite() {
            return Err(NeuralError::NonFiniteLoss(mean_reward).into());
        }
        let last = batch + 1 == batches;
        if update_actor && ((batch + 1) % config.eval_every.max(1) == 0 || last) {
            let r = evaluate(&policy)?;
            tracing::debug!(batch, reward = r, "rl evaluation");
            report.evaluations.push((batch + 1, r));
            if r > report.best_reward {
                report.best_reward = r;
                report.best_batch = batch + 1;
                best_policy = policy.clone();
                best_critic = critic.clone();
            }
        }
    }
    if report.evaluations.is_empty() {
        best_policy = policy;
        best_critic = critic;
    }
    Ok((best_policy, best_critic, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::grad_check;
    use crate::populations::default_roster;

    fn tiny() -> NetConfig {
        NetConfig {
            hidden: 6,
            layers: 1,
            head_hidden: 6,
        }
    }

    #[test]
    fn zero_episodes_leave_policy_unchanged() {
        let mut rng = SimRng::seed_from_u64(0);
        let policy = PolicyNet::new(&tiny(), &mut rng);
        let config = RlConfig {
            episodes: 0,
            net: tiny(),
            ..Default::default()
        };
        let (trained, _, _) =
            train_rl(&policy, &default_roster(), &[0, 5], &MatchConfig::default(), &config, TemplateBank::builtin()).unwrap();
        assert_eq!(trained, policy);
    }

    #[test]
    fn training_is_reproducible() {
        let mut rng = SimRng::seed_from_u64(1);
        let policy = PolicyNet::new(&tiny(), &mut rng);
        let config = RlConfig {
            episodes: 64,
            batch_size: 8,
            critic_warmup_batches: 2,
            eval_every: 3,
            eval_episodes: 10,
            net: tiny(),
            ..Default::default()
        };
        let run = || {
            train_rl(&policy, &default_roster(), &[0, 3, 5], &MatchConfig::default(), &config, TemplateBank::builtin()).unwrap()
        };
        let (a, va, ra) = run();
        let (b, vb, rb) = run();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        assert_eq!(va, vb);
    }

    #[test]
    fn actor_gradient_matches_surrogate() {
        // The actor update is the gradient of sum_k -A_k log pi(a_k | s_k)
        // with the advantages held fixed; check it against finite
        // differences of that surrogate.
        let roster = default_roster();
        let mut rng = SimRng::seed_from_u64(2);
        let policy = PolicyNet::new(&tiny(), &mut rng);
        let agent = RlAgent::new(Arc::new(policy.clone()), 0.1);
        let opp = PopulationAgent::new(roster.get(3).unwrap().clone());
        let ep = play(&agent, &opp, &MatchConfig::default(), 5, TemplateBank::builtin()).unwrap();
        let config = RlConfig {
            entropy_weight: 0.0,
            net: tiny(),
            ..Default::default()
        };
        let mut critic = ValueNet::new(&tiny(), &mut rng);
        let traj = Trajectory::from_episode(&ep);
        let feats = history_features(&ep.state.history, ep.agent);
        let ts: Vec<usize> = traj.steps.iter().map(|s| s.t).collect();
        let (_, heads) = critic.forward_at(&feats, &ts);
        let values: Vec<f64> = heads.iter().map(|c| c.output()[0]).collect();
        let advantages: Vec<f64> = (0..ts.len())
            .map(|k| traj.steps[k].reward + values.get(k + 1).copied().unwrap_or(0.0) - values[k])
            .collect();
        let mut net = policy.clone();
        let report = grad_check(
            &mut net,
            |m: &mut PolicyNet| {
                let before = critic.clone();
                accumulate(m, &mut critic, &ep, &config, true);
                critic = before;
                let enc = m.encoder.forward(&feats);
                let mut surrogate = 0.0;
                for (k, step) in traj.steps.iter().enumerate() {
                    let previous = step.t.checked_sub(1).map(|p| &ep.state.history[p].act);
                    let mask = legal_responses(previous).unwrap().mask();
                    let out = m.head.forward(&enc.states()[step.t]).output().to_vec();
                    let logp = crate::neural::log_softmax_masked(&out[..Intent::COUNT], &mask)[step.act.intent.index()];
                    let mut lp = logp;
                    if let Some(p) = step.act.price {
                        let mu = crate::neural::sigmoid(out[Intent::COUNT]);
                        let u = ep.agent.utility(p);
                        lp += -(u - mu) * (u - mu) / (2.0 * 0.01);
                    }
                    surrogate -= advantages[k] * lp;
                }
                surrogate
            },
            1e-6,
            200,
            &mut rng,
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
