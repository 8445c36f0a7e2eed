use serde::{Deserialize, Serialize};

use super::{join, Matrix, Module, Param};
use crate::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected layer `act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl Dense {
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut SimRng) -> Self {
        let scale = (6.0 / (input + output) as f64).sqrt();
        Dense {
            w: Param::new(Matrix::random(output, input, scale, rng)),
            b: Param::zeros(output, 1),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.cols
    }

    pub fn output_dim(&self) -> usize {
        self.w.value.rows
    }

    /// Pre-activation `W x + b`.
    pub fn linear(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.value.data.clone();
        self.w.value.matvec_add(x, &mut out);
        out
    }

    pub fn forward(&self, x: &[f64]) -> DenseCache {
        let mut out = self.linear(x);
        for v in &mut out {
            *v = self.activation.apply(*v);
        }
        DenseCache {
            input: x.to_vec(),
            output: out,
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &DenseCache, dy: &[f64]) -> Vec<f64> {
        let da: Vec<f64> = dy
            .iter()
            .zip(&cache.output)
            .map(|(g, y)| g * self.activation.derivative_from_output(*y))
            .collect();
        self.w.grad.outer_rows_add(0, &da, &cache.input);
        for (g, d) in self.b.grad.data.iter_mut().zip(&da) {
            *g += d;
        }
        let mut dx = vec![0.0; self.input_dim()];
        self.w.value.matvec_t_rows_add(0, &da, &mut dx);
        dx
    }
}

impl Module for Dense {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "w"), &self.w);
        f(&join(prefix, "b"), &self.b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "w"), &mut self.w);
        f(&join(prefix, "b"), &mut self.b);
    }
}

/// Stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpCache {
    pub layers: Vec<DenseCache>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        &self.layers.last().expect("non-empty").output
    }

    /// Output of the last hidden layer (the input of the final layer).
    pub fn penultimate(&self) -> &[f64] {
        &self.layers.last().expect("non-empty").input
    }
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`; hidden layers use `hidden_act`,
    /// the last layer is linear.
    pub fn new(sizes: &[usize], hidden_act: Activation, rng: &mut SimRng) -> Self {
        assert!(sizes.len() >= 2);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == sizes.len() {
                    Activation::Identity
                } else {
                    hidden_act
                };
                Dense::new(w[0], w[1], act, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn forward(&self, x: &[f64]) -> MlpCache {
        let mut caches: Vec<DenseCache> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = caches.last().map_or(x, |c| c.output.as_slice());
            let c = layer.forward(input);
            caches.push(c);
        }
        MlpCache { layers: caches }
    }

    /// Runs the layers after the first, given the first layer's
    /// pre-activation. Lets callers build that pre-activation cheaply from
    /// sparse inputs.
    pub fn forward_from_first_linear(&self, first_linear: &[f64]) -> Vec<f64> {
        let act = self.layers[0].activation;
        let mut h: Vec<f64> = first_linear.iter().map(|v| act.apply(*v)).collect();
        for layer in &self.layers[1..] {
            let mut out = layer.b.value.data.clone();
            layer.w.value.matvec_add(&h, &mut out);
            for v in &mut out {
                *v = layer.activation.apply(*v);
            }
            h = out;
        }
        h
    }

    pub fn backward(&mut self, cache: &MlpCache, dy: &[f64]) -> Vec<f64> {
        let mut grad = dy.to_vec();
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers).rev() {
            grad = layer.backward(c, &grad);
        }
        grad
    }
}

impl Module for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("l{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("l{i}")), f);
        }
    }
}
