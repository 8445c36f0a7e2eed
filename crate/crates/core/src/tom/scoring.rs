use super::Variant;
use crate::managers::sample_index;
use crate::ontology::DialogAct;
use crate::SimRng;

/// One-step simulation used to score a candidate act: the agent renders the
/// act as an utterance, the opponent responds, and the successor is valued.
pub trait Lookahead {
    type Act;
    type Utterance;
    type Response;

    /// Exact return when playing `act` ends the dialog by itself.
    fn terminal(&self, act: &Self::Act) -> Option<f64>;

    /// Generator distribution over utterances for `act`.
    fn utterances(&self, act: &Self::Act) -> Vec<(Self::Utterance, f64)>;

    /// Opponent response distribution after `act` rendered as `utterance`.
    fn responses(&self, act: &Self::Act, utterance: &Self::Utterance) -> Vec<(Self::Response, f64)>;

    /// Shaped reward plus value of the state reached after `response`.
    fn successor_value(&self, act: &Self::Act, utterance: &Self::Utterance, response: &Self::Response) -> f64;
}

/// Score of `act` by full enumeration of utterances and responses.
pub fn tom_score<L: Lookahead>(lookahead: &L, act: &L::Act, variant: Variant) -> f64 {
    if let Some(v) = lookahead.terminal(act) {
        return v;
    }
    let mut total = 0.0;
    for (u, pu) in lookahead.utterances(act) {
        let responses = lookahead.responses(act, &u);
        let values = responses
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(r, p)| (lookahead.successor_value(act, &u, r), *p));
        let inner = match variant {
            Variant::Expected => values.map(|(v, p)| v * p).sum(),
            Variant::Competitive => values.map(|(v, _)| v).fold(f64::INFINITY, f64::min),
            Variant::Cooperative => values.map(|(v, _)| v).fold(f64::NEG_INFINITY, f64::max),
        };
        total += pu * inner;
    }
    total
}

/// Expected score estimated from `samples` joint draws of utterance and
/// response.
pub fn tom_score_monte_carlo<L: Lookahead>(lookahead: &L, act: &L::Act, samples: usize, rng: &mut SimRng) -> f64 {
    if let Some(v) = lookahead.terminal(act) {
        return v;
    }
    let utterances = lookahead.utterances(act);
    let weights: Vec<f64> = utterances.iter().map(|(_, p)| *p).collect();
    let mut total = 0.0;
    for _ in 0..samples {
        let (u, _) = &utterances[sample_index(&weights, rng)];
        let responses = lookahead.responses(act, u);
        let rw: Vec<f64> = responses.iter().map(|(_, p)| *p).collect();
        let (r, _) = &responses[sample_index(&rw, rng)];
        total += lookahead.successor_value(act, u, r);
    }
    total / samples.max(1) as f64
}

/// `p_i ∝ exp(s_i / beta)`, shifted by the maximum score.
pub fn boltzmann(scores: &[f64], beta: f64) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| ((s - max) / beta).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Elementwise product of the two distributions, renormalised. Falls back
/// to `prior` when the product vanishes; the flag reports the fallback.
pub fn combine_prior(prior: &[f64], tom: &[f64]) -> (Vec<f64>, bool) {
    let product: Vec<f64> = prior.iter().zip(tom).map(|(a, b)| a * b).collect();
    let z: f64 = product.iter().sum();
    if z > 0.0 && z.is_finite() {
        (product.into_iter().map(|x| x / z).collect(), false)
    } else {
        let z: f64 = prior.iter().sum();
        (prior.iter().map(|x| x / z).collect(), true)
    }
}

/// A distribution over concrete dialog acts.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution {
    pub acts: Vec<DialogAct>,
    pub probs: Vec<f64>,
}

impl PolicyDistribution {
    pub fn sample(&self, rng: &mut SimRng) -> DialogAct {
        self.acts[sample_index(&self.probs, rng)]
    }

    pub fn argmax(&self) -> DialogAct {
        let i = self
            .probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.acts[i]
    }
}

/// Random point on the probability simplex.
#[cfg(test)]
pub(crate) fn random_simplex(n: usize, rng: &mut SimRng) -> Vec<f64> {
    use rand::Rng;
    let w: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Tabulated instance: every distribution and value is an explicit table.
    struct Table {
        terminal: Vec<Option<f64>>,
        g: Vec<Vec<f64>>,
        /// `t[a][u]` = response probabilities.
        t: Vec<Vec<Vec<f64>>>,
        /// `v[a][u][r]`
        v: Vec<Vec<Vec<f64>>>,
    }

    impl Lookahead for Table {
        type Act = usize;
        type Utterance = usize;
        type Response = usize;

        fn terminal(&self, a: &usize) -> Option<f64> {
            self.terminal[*a]
        }
        fn utterances(&self, a: &usize) -> Vec<(usize, f64)> {
            self.g[*a].iter().cloned().enumerate().collect()
        }
        fn responses(&self, a: &usize, u: &usize) -> Vec<(usize, f64)> {
            self.t[*a][*u].iter().cloned().enumerate().collect()
        }
        fn successor_value(&self, a: &usize, u: &usize, r: &usize) -> f64 {
            self.v[*a][*u][*r]
        }
    }

    fn random_table(rng: &mut SimRng, acts: usize, utts: usize, resp: usize) -> Table {
        Table {
            terminal: (0..acts).map(|i| (i == 0).then(|| rng.gen_range(-1.0..1.0))).collect(),
            g: (0..acts).map(|_| random_simplex(utts, rng)).collect(),
            t: (0..acts).map(|_| (0..utts).map(|_| random_simplex(resp, rng)).collect()).collect(),
            v: (0..acts)
                .map(|_| (0..utts).map(|_| (0..resp).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
                .collect(),
        }
    }

    #[test]
    fn variants_are_ordered() {
        let mut rng = SimRng::seed_from_u64(3);
        for _ in 0..1000 {
            let table = random_table(&mut rng, 2, 3, 6);
            let e = tom_score(&table, &1, Variant::Expected);
            let c = tom_score(&table, &1, Variant::Competitive);
            let k = tom_score(&table, &1, Variant::Cooperative);
            assert!(c <= e && e <= k, "{c} {e} {k}");
        }
    }

    #[test]
    fn terminal_candidates_use_exact_value() {
        let mut rng = SimRng::seed_from_u64(4);
        let table = random_table(&mut rng, 2, 2, 3);
        for variant in [Variant::Expected, Variant::Competitive, Variant::Cooperative] {
            assert_eq!(tom_score(&table, &0, variant), table.terminal[0].unwrap());
        }
    }

    #[test]
    fn fallback_returns_prior() {
        let (p, fell_back) = combine_prior(&[0.5, 0.5, 0.0], &[0.0, 0.0, 1.0]);
        assert!(fell_back);
        assert_eq!(p, vec![0.5, 0.5, 0.0]);
    }

    proptest! {
        #[test]
        fn boltzmann_is_a_distribution(scores in prop::collection::vec(-5.0f64..5.0, 1..40), beta in 1e-4f64..10.0) {
            let p = boltzmann(&scores, beta);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|x| *x >= 0.0 && x.is_finite()));
        }

        #[test]
        fn boltzmann_preserves_order(scores in prop::collection::vec(-5.0f64..5.0, 2..20), beta in 1e-3f64..10.0) {
            let p = boltzmann(&scores, beta);
            for i in 0..scores.len() {
                for j in 0..scores.len() {
                    if scores[i] > scores[j] {
                        prop_assert!(p[i] >= p[j]);
                    }
                }
            }
        }

        #[test]
        fn combination_with_uniform_is_identity(seed in 0u64..1000, n in 1usize..30) {
            let mut rng = SimRng::seed_from_u64(seed);
            let p = random_simplex(n, &mut rng);
            let u = vec![1.0 / n as f64; n];
            let (a, _) = combine_prior(&p, &u);
            let (b, _) = combine_prior(&u, &p);
            for i in 0..n {
                prop_assert!((a[i] - p[i]).abs() < 1e-12);
                prop_assert!((b[i] - p[i]).abs() < 1e-12);
            }
        }
    }
}
