use serde::{Deserialize, Serialize};

use crate::environment::{DialogState, Role};
use crate::features::{absent, history_features, ACT_DIM};
use crate::neural::{join, sigmoid, Activation, Encoder, EncoderCache, Mlp, MlpCache, Module, Param};
use crate::ontology::{legal_responses, Intent};
use crate::SimRng;

/// Sizes shared by the learned models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden: usize,
    pub layers: usize,
    pub head_hidden: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: 300,
            layers: 2,
            head_hidden: 64,
        }
    }
}

/// Next-act policy: recurrent encoder over the history, then a head giving
/// 15 intent logits and a squashed price in own-utility units.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub encoder: Encoder,
    pub head: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub intent_logits: Vec<f64>,
    /// Pre-sigmoid price output.
    pub price_raw: f64,
    /// Own utility of the proposed price.
    pub price_mean: f64,
}

impl PolicyNet {
    pub fn new(config: &NetConfig, rng: &mut SimRng) -> Self {
        PolicyNet {
            encoder: Encoder::new(ACT_DIM, config.hidden, config.layers, rng),
            head: Mlp::new(&[config.hidden, config.head_hidden, Intent::COUNT + 1], Activation::Tanh, rng),
        }
    }

    pub fn head_output(out: &[f64]) -> PolicyOutput {
        let price_raw = out[Intent::COUNT];
        PolicyOutput {
            intent_logits: out[..Intent::COUNT].to_vec(),
            price_raw,
            price_mean: sigmoid(price_raw),
        }
    }

    pub fn output_from_hidden(&self, h: &[f64]) -> PolicyOutput {
        Self::head_output(self.head.forward(h).output())
    }

    pub fn output(&self, state: &DialogState, role: Role) -> PolicyOutput {
        let h = self.encoder.encode(&history_features(&state.history, role));
        self.output_from_hidden(&h)
    }

    /// Intent probabilities over the intents legal right now.
    pub fn intent_probs(output: &PolicyOutput, state: &DialogState) -> Vec<f64> {
        let mask = legal_responses(state.last_act()).unwrap_or_default().mask();
        crate::neural::softmax_masked(&output.intent_logits, &mask)
    }
}

impl Module for PolicyNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// State-value critic. The encoder reads all but the last two turns; those
/// two enter the head directly, so lookahead over many one-step successors
/// shares one encoder pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub encoder: Encoder,
    pub head: Mlp,
}

impl ValueNet {
    pub fn new(config: &NetConfig, rng: &mut SimRng) -> Self {
        ValueNet {
            encoder: Encoder::new(ACT_DIM, config.hidden, config.layers, rng),
            head: Mlp::new(&[config.hidden + 2 * ACT_DIM, config.head_hidden, 1], Activation::Relu, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.encoder.hidden()
    }

    /// Head input for the state made of the first `t` turns, given encoder
    /// states over the same features.
    pub fn head_input(states: &[Vec<f64>], feats: &[Vec<f64>], t: usize) -> Vec<f64> {
        let base = t.saturating_sub(2);
        let mut x = states[base].clone();
        for j in [t as isize - 2, t as isize - 1] {
            if j >= 0 {
                x.extend_from_slice(&feats[j as usize]);
            } else {
                x.extend(absent());
            }
        }
        x
    }

    /// Values of the states after the first `t` turns, for each `t` in `ts`,
    /// with the caches needed for backpropagation.
    pub fn forward_at(&self, feats: &[Vec<f64>], ts: &[usize]) -> (EncoderCache, Vec<MlpCache>) {
        let enc = self.encoder.forward(feats);
        let heads = ts
            .iter()
            .map(|&t| self.head.forward(&Self::head_input(enc.states(), feats, t)))
            .collect();
        (enc, heads)
    }

    /// Accumulates gradients for `dvalues[i]` on the value at `ts[i]`.
    pub fn backward_at(
        &mut self,
        ts: &[usize],
        enc: &EncoderCache,
        heads: &[MlpCache],
        dvalues: &[f64],
    ) {
        let hidden = self.hidden();
        let mut dstates = vec![vec![0.0; hidden]; enc.states().len()];
        for ((&t, cache), &dv) in ts.iter().zip(heads).zip(dvalues) {
            if dv == 0.0 {
                continue;
            }
            let dx = self.head.backward(cache, &[dv]);
            let base = t.saturating_sub(2);
            for (d, g) in dstates[base].iter_mut().zip(&dx[..hidden]) {
                *d += g;
            }
        }
        self.encoder.backward(enc, &dstates);
    }

    pub fn value_of(&self, state: &DialogState, role: Role) -> f64 {
        let feats = history_features(&state.history, role);
        let t = feats.len();
        let h = self.encoder.encode(&feats[..t.saturating_sub(2)]);
        let mut states = vec![Vec::new(); t.saturating_sub(2) + 1];
        states[t.saturating_sub(2)] = h;
        self.head.forward(&Self::head_input(&states, &feats, t)).output()[0]
    }
}

impl Module for ValueNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::grad_check;
    use rand::{Rng, SeedableRng};

    fn feats(rng: &mut SimRng, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..ACT_DIM).map(|_| rng.gen_range(0.0..1.0)).collect()).collect()
    }

    #[test]
    fn value_forms_agree() {
        let mut rng = SimRng::seed_from_u64(1);
        let cfg = NetConfig {
            hidden: 5,
            layers: 2,
            head_hidden: 4,
        };
        let v = ValueNet::new(&cfg, &mut rng);
        let f = feats(&mut rng, 6);
        let (enc, heads) = v.forward_at(&f, &[0, 1, 2, 6]);
        // Encoding only the prefix must give the same value as the full pass.
        for (i, &t) in [0usize, 1, 2, 6].iter().enumerate() {
            let base = t.saturating_sub(2);
            let h = v.encoder.encode(&f[..base]);
            assert_eq!(h, enc.states()[base]);
            let mut states = vec![Vec::new(); base + 1];
            states[base] = h;
            let direct = v.head.forward(&ValueNet::head_input(&states, &f, t)).output()[0];
            assert!((direct - heads[i].output()[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn value_gradients_match() {
        let mut rng = SimRng::seed_from_u64(2);
        let cfg = NetConfig {
            hidden: 4,
            layers: 2,
            head_hidden: 5,
        };
        let mut v = ValueNet::new(&cfg, &mut rng);
        let f = feats(&mut rng, 5);
        let ts = [1usize, 3, 5];
        let targets = [0.3, -0.5, 1.0];
        let report = grad_check(
            &mut v,
            |m: &mut ValueNet| {
                let (enc, heads) = m.forward_at(&f, &ts);
                let mut loss = 0.0;
                let mut d = Vec::new();
                for (c, y) in heads.iter().zip(targets) {
                    let e = c.output()[0] - y;
                    loss += e * e;
                    d.push(2.0 * e);
                }
                m.backward_at(&ts, &enc, &heads, &d);
                loss
            },
            1e-6,
            200,
            &mut rng,
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
