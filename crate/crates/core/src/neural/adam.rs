use serde::{Deserialize, Serialize};

use super::{Module, NeuralError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `0` disables it.
    #[serde(default)]
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 0.0,
        }
    }
}

/// Adam with per-tensor moment buffers, matched to a module by visiting order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub steps: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies the accumulated gradients and clears them. Refuses to touch
    /// parameters if any gradient is non-finite.
    pub fn step(&mut self, module: &mut dyn Module) -> Result<(), NeuralError> {
        let mut bad = None;
        let mut norm2 = 0.0;
        module.visit("", &mut |name, p| {
            for g in &p.grad.data {
                norm2 += g * g;
                if !g.is_finite() && bad.is_none() {
                    bad = Some(name.to_string());
                }
            }
        });
        if let Some(name) = bad {
            return Err(NeuralError::NonFiniteGradient(name));
        }
        let clip = if self.config.clip_norm > 0.0 && norm2.sqrt() > self.config.clip_norm {
            self.config.clip_norm / norm2.sqrt()
        } else {
            1.0
        };
        self.steps += 1;
        let c = self.config;
        let t = self.steps as f64;
        let correction1 = 1.0 - c.beta1.powf(t);
        let correction2 = 1.0 - c.beta2.powf(t);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        module.visit_mut("", &mut |_, p| {
            if m.len() <= idx {
                m.push(vec![0.0; p.value.data.len()]);
                v.push(vec![0.0; p.value.data.len()]);
            }
            let (mi, vi) = (&mut m[idx], &mut v[idx]);
            for k in 0..p.value.data.len() {
                let g = p.grad.data[k] * clip;
                mi[k] = c.beta1 * mi[k] + (1.0 - c.beta1) * g;
                vi[k] = c.beta2 * vi[k] + (1.0 - c.beta2) * g * g;
                let mhat = mi[k] / correction1;
                let vhat = vi[k] / correction2;
                p.value.data[k] -= c.learning_rate * mhat / (vhat.sqrt() + c.epsilon);
                p.grad.data[k] = 0.0;
            }
            idx += 1;
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{join, Matrix, Param};

    struct Scalar(Param);

    impl Module for Scalar {
        fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
            f(&join(prefix, "x"), &self.0);
        }
        fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
            f(&join(prefix, "x"), &mut self.0);
        }
    }

    fn scalar(x: f64) -> Scalar {
        Scalar(Param::new(Matrix {
            rows: 1,
            cols: 1,
            data: vec![x],
        }))
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar(0.7);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..10 {
            adam.step(&mut s).unwrap();
        }
        assert_eq!(s.0.value.data[0], 0.7);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut s = scalar(0.7);
        s.0.grad.data[0] = f64::NAN;
        let mut adam = Adam::new(AdamConfig::default());
        assert!(matches!(adam.step(&mut s), Err(NeuralError::NonFiniteGradient(n)) if n == "x"));
        assert_eq!(s.0.value.data[0], 0.7);
    }

    fn minimize_square(config: AdamConfig) -> (usize, f64) {
        let mut s = scalar(1.0);
        let mut adam = Adam::new(config);
        for i in 0..5000 {
            let x = s.0.value.data[0];
            if x.abs() < 1e-6 {
                return (i, x);
            }
            s.0.grad.data[0] = 2.0 * x;
            adam.step(&mut s).unwrap();
        }
        (5000, s.0.value.data[0])
    }

    #[test]
    fn converges_on_a_quadratic() {
        // Step counts from an independent scalar Adam run on f(x) = x^2 from x = 1.
        let (steps, x) = minimize_square(AdamConfig::default());
        assert!(x.abs() < 1e-6, "x = {x}");
        assert_eq!(steps, 3726);
        assert_eq!(minimize_square(AdamConfig::default()), (steps, x));
        let fast = AdamConfig {
            learning_rate: 1e-2,
            ..Default::default()
        };
        assert_eq!(minimize_square(fast).0, 351);
    }
}
