use rayon::prelude::*;

use crate::derive_seed;
use crate::environment::EnvError;
use crate::generator::TemplateBank;
use crate::populations::{PopulationAgent, PopulationRoster};
use crate::rollout::{play, Episode, MatchConfig, Negotiator};

/// Splits `total` dialogs by `weights` with largest remainders, ties going
/// to the lower index.
pub fn allocate(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let missing = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

/// Opponent id of every dialog, in blocks per population.
pub fn opponent_schedule(ids: &[u8], counts: &[usize]) -> Vec<u8> {
    ids.iter().zip(counts).flat_map(|(&id, &n)| std::iter::repeat(id).take(n)).collect()
}

/// Plays dialog `i` against `schedule[i]` with seed `derive_seed(seed, i)`.
/// Dialogs run in parallel; the result does not depend on the thread count.
pub fn evaluate(
    agent: &dyn Negotiator,
    roster: &PopulationRoster,
    schedule: &[u8],
    match_config: &MatchConfig,
    seed: u64,
    alternate_roles: bool,
    bank: &TemplateBank,
) -> Result<Vec<Episode>, EnvError> {
    schedule
        .par_iter()
        .enumerate()
        .map(|(i, &id)| {
            let spec = roster
                .get(id)
                .ok_or_else(|| EnvError::InvalidConfig(format!("population {id} is not in the roster")))?;
            let opponent = PopulationAgent::new(spec.clone());
            let mut config = match_config.clone();
            if alternate_roles && i % 2 == 1 {
                config.agent_role = match_config.agent_role.other();
            }
            play(agent, &opponent, &config, derive_seed(seed, i as u64), bank)
        })
        .collect()
}
