use std::sync::Arc;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::scoring::tom_score_monte_carlo;
use super::{TomAgent, Variant};
use crate::derive_seed;
use crate::environment::{reward, DialogState, Role};
use crate::features::history_features;
use crate::generator::{GenerationMode, TemplateBank};
use crate::managers::{policy_gradient, PolicyNet, TrainError, ValueNet};
use crate::neural::{Adam, AdamConfig, Module, NeuralError};
use crate::ontology::DialogAct;
use crate::populations::{PopulationAgent, PopulationRoster};
use crate::rollout::{continue_dialog, play, MatchConfig, Negotiator};
use crate::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    /// Penalty per unit of standing price gap at non-terminal successors.
    pub gap_penalty: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            iterations: 20,
            episodes_per_iteration: 32,
            actor_learning_rate: 1e-4,
            critic_learning_rate: 5e-4,
            gap_penalty: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub mean_rewards: Vec<f64>,
    pub critic_losses: Vec<f64>,
}

pub(crate) fn prefix_state(state: &DialogState, t: usize) -> DialogState {
    let mut s = state.clone();
    s.history.truncate(t);
    s.outcome = None;
    s
}

/// Critic target for playing `act` in `state`: the expectation over the
/// opponent model of shaped reward plus the agent's current critic.
pub fn lookahead_target(agent: &TomAgent, state: &DialogState, role: Role, act: &DialogAct, gap_penalty: f64) -> f64 {
    let condition = agent.models.condition(state, role);
    agent.lookahead(state, role, &condition, gap_penalty).score(act, Variant::Expected)
}

/// One sampled draw of [`lookahead_target`].
pub fn lookahead_target_sample(
    agent: &TomAgent,
    state: &DialogState,
    role: Role,
    act: &DialogAct,
    gap_penalty: f64,
    rng: &mut SimRng,
) -> f64 {
    let condition = agent.models.condition(state, role);
    let look = agent.lookahead(state, role, &condition, gap_penalty);
    tom_score_monte_carlo(&look, act, 1, rng)
}

/// Return of a single rollout that plays `act` in `state` and continues
/// with `agent` against `opponent`.
#[allow(clippy::too_many_arguments)]
pub fn rollout_return(
    agent: &dyn Negotiator,
    opponent: &dyn Negotiator,
    state: &DialogState,
    role: Role,
    act: DialogAct,
    bank: &TemplateBank,
    mode: GenerationMode,
    rng: &mut SimRng,
) -> Result<f64, TrainError> {
    let mut s = state.clone();
    let utterance = bank.generate(&s, &act, agent.style_tokens(rng), rng, mode);
    let outcome = match s.push(role, act, utterance)? {
        Some(o) => o,
        None => continue_dialog(&mut s, agent, role, opponent, bank, mode, rng)?,
    };
    Ok(reward(&outcome, role))
}

/// Actor-critic fine-tuning of the RL policy and critic under the ToM
/// policy. Each visited decision regresses the critic toward its lookahead
/// target computed with the previous iteration's critic; the same target
/// minus the current value is the actor's advantage.
pub fn finetune_tom(
    agent: &TomAgent,
    roster: &PopulationRoster,
    opponents: &[u8],
    match_config: &MatchConfig,
    config: &FinetuneConfig,
    bank: &TemplateBank,
) -> Result<(PolicyNet, ValueNet, FinetuneReport), TrainError> {
    if opponents.is_empty() {
        return Err(TrainError::Invalid("no opponents".into()));
    }
    let mut policy = (*agent.models.policy).clone();
    let mut critic = (*agent.models.value).clone();
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
    let mut report = FinetuneReport {
        mean_rewards: Vec::new(),
        critic_losses: Vec::new(),
    };
    let mut episode_index = 0u64;
    for _ in 0..config.iterations {
        let mut current = agent.clone();
        current.debug = None;
        current.models.policy = Arc::new(policy.clone());
        current.models.value = Arc::new(critic.clone());
        policy.zero_grad();
        critic.zero_grad();
        let (mut total_reward, mut critic_loss, mut decisions) = (0.0, 0.0, 0usize);
        for _ in 0..config.episodes_per_iteration {
            let seed = derive_seed(config.seed, episode_index);
            episode_index += 1;
            let id = opponents[(derive_seed(seed, 3) % opponents.len() as u64) as usize];
            let spec = roster
                .get(id)
                .ok_or_else(|| TrainError::Invalid(format!("unknown population {id}")))?;
            let opp = PopulationAgent::new(spec.clone());
            let ep = play(&current, &opp, match_config, seed, bank)?;
            total_reward += ep.metrics.reward();
            let role = ep.agent;
            let history = &ep.state.history;
            let ts: Vec<usize> = (0..history.len()).filter(|&t| history[t].agent == role).collect();
            if ts.is_empty() {
                continue;
            }
            let targets: Vec<f64> = ts
                .iter()
                .map(|&t| lookahead_target(&current, &prefix_state(&ep.state, t), role, &history[t].act, config.gap_penalty))
                .collect();
            let feats = history_features(history, role);
            let (enc, heads) = critic.forward_at(&feats, &ts);
            let values: Vec<f64> = heads.iter().map(|c| c.output()[0]).collect();
            let dvalues: Vec<f64> = values.iter().zip(&targets).map(|(v, y)| 2.0 * (v - y)).collect();
            critic_loss += values.iter().zip(&targets).map(|(v, y)| (v - y) * (v - y)).sum::<f64>();
            critic.backward_at(&ts, &enc, &heads, &dvalues);
            let steps: Vec<(usize, DialogAct, f64)> = ts
                .iter()
                .zip(targets.iter().zip(&values))
                .map(|(&t, (y, v))| (t, history[t].act, y - v))
                .collect();
            policy_gradient(&mut policy, history, role, &steps, agent.rl_price_sigma, 0.0);
            decisions += ts.len();
        }
        if !critic_loss.is_finite() {
            return Err(NeuralError::NonFiniteLoss(critic_loss).into());
        }
        if decisions > 0 {
            let scale = 1.0 / decisions as f64;
            critic.scale_grad(scale);
            policy.scale_grad(scale);
            critic_opt.step(&mut critic)?;
            actor_opt.step(&mut policy)?;
        }
        let mean = total_reward / config.episodes_per_iteration.max(1) as f64;
        tracing::debug!(mean, critic_loss, "tom finetune iteration");
        report.mean_rewards.push(mean);
        report.critic_losses.push(critic_loss / decisions.max(1) as f64);
    }
    Ok((policy, critic, report))
}

/// Sample variance of `draws`.
pub fn sample_variance(draws: &[f64]) -> f64 {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Per-state sample variances of 100 lookahead-target draws and of 100
/// single-rollout returns, for the agent's decisions in the given states.
pub fn target_variances(
    agent: &TomAgent,
    opponent: &dyn Negotiator,
    states: &[(DialogState, DialogAct)],
    role: Role,
    gap_penalty: f64,
    bank: &TemplateBank,
    seed: u64,
) -> Result<Vec<(f64, f64)>, TrainError> {
    let mut rng = SimRng::seed_from_u64(seed);
    states
        .iter()
        .map(|(state, act)| {
            let look: Vec<f64> = (0..100)
                .map(|_| lookahead_target_sample(agent, state, role, act, gap_penalty, &mut rng))
                .collect();
            let roll = (0..100)
                .map(|_| rollout_return(agent, opponent, state, role, *act, bank, GenerationMode::Stochastic, &mut rng))
                .collect::<Result<Vec<f64>, _>>()?;
            Ok((sample_variance(&look), sample_variance(&roll)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::managers::NetConfig;
    use crate::populations::default_roster;
    use crate::tom::{IdentifierNet, TomConfig, TomModels, TomMode, TransitionNet};

    fn agent() -> TomAgent {
        let cfg = NetConfig {
            hidden: 6,
            layers: 1,
            head_hidden: 8,
        };
        let mut rng = SimRng::seed_from_u64(0);
        let models = TomModels {
            policy: Arc::new(PolicyNet::new(&cfg, &mut rng)),
            value: Arc::new(ValueNet::new(&cfg, &mut rng)),
            transition: Arc::new(TransitionNet::new(TomMode::Implicit, &cfg, &mut rng)),
            identifier: None::<Arc<IdentifierNet>>,
        };
        TomAgent::new(models, TomConfig::default(), 0.1, Arc::new(TemplateBank::builtin().clone()))
    }

    #[test]
    fn zero_iterations_leave_parameters_unchanged() {
        let a = agent();
        let cfg = FinetuneConfig {
            iterations: 0,
            ..Default::default()
        };
        let (p, v, report) = finetune_tom(&a, &default_roster(), &[5], &MatchConfig::default(), &cfg, TemplateBank::builtin()).unwrap();
        assert_eq!(&p, a.models.policy.as_ref());
        assert_eq!(&v, a.models.value.as_ref());
        assert!(report.mean_rewards.is_empty());
    }

    #[test]
    fn one_iteration_moves_the_critic() {
        let a = agent();
        let cfg = FinetuneConfig {
            iterations: 1,
            episodes_per_iteration: 2,
            ..Default::default()
        };
        let (_, v, report) = finetune_tom(&a, &default_roster(), &[3], &MatchConfig::default(), &cfg, TemplateBank::builtin()).unwrap();
        assert_ne!(&v, a.models.value.as_ref());
        assert_eq!(report.mean_rewards.len(), 1);
    }

    #[test]
    fn sampled_targets_average_to_the_exact_target() {
        let a = agent();
        let opp = PopulationAgent::new(default_roster().get(2).unwrap().clone());
        let ep = play(&a, &opp, &MatchConfig::default(), 4, TemplateBank::builtin()).unwrap();
        let t = ep.state.history.iter().position(|e| e.agent == ep.agent).unwrap();
        let state = prefix_state(&ep.state, t);
        let act = ep.state.history[t].act;
        let exact = lookahead_target(&a, &state, ep.agent, &act, 0.1);
        let mut rng = SimRng::seed_from_u64(9);
        let n = 4000;
        let draws: Vec<f64> = (0..n).map(|_| lookahead_target_sample(&a, &state, ep.agent, &act, 0.1, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let se = (sample_variance(&draws) / n as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * se + 1e-9, "{mean} {exact} {se}");
    }
}
