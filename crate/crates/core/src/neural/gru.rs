use super::loss::sigmoid;
use super::{join, Matrix, Module, Param};
use crate::SimRng;

/// One gated recurrent layer:
///
/// ```text
/// z  = σ(Wz x + Uz h + bz)
/// r  = σ(Wr x + Ur h + br)
/// n  = tanh(Wn x + bn + r ⊙ (Un h + bhn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
///
/// with a learned initial state `h0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    pub wx: Param,
    pub wh: Param,
    pub b: Param,
    pub bhn: Param,
    pub h0: Param,
}

/// Per-step activations of one layer over a sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GruCache {
    pub inputs: Vec<Vec<f64>>,
    /// `hs[0]` is the initial state, `hs[t + 1]` follows input `t`.
    pub hs: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
    hn: Vec<Vec<f64>>,
}

impl GruLayer {
    pub fn new(input: usize, hidden: usize, rng: &mut SimRng) -> Self {
        let scale = 1.0 / (hidden as f64).sqrt();
        GruLayer {
            wx: Param::new(Matrix::random(3 * hidden, input, scale, rng)),
            wh: Param::new(Matrix::random(3 * hidden, hidden, scale, rng)),
            b: Param::zeros(3 * hidden, 1),
            bhn: Param::zeros(hidden, 1),
            h0: Param::zeros(hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.h0.value.rows
    }

    pub fn input_dim(&self) -> usize {
        self.wx.value.cols
    }

    /// Single step without caching.
    pub fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let hd = self.hidden();
        let mut gx = self.b.value.data.clone();
        self.wx.value.matvec_add(x, &mut gx);
        let mut hn = self.bhn.value.data.clone();
        self.wh.value.matvec_rows_add(2 * hd, h, &mut hn);
        let mut zr = vec![0.0; 2 * hd];
        self.wh.value.matvec_rows_add(0, h, &mut zr);
        (0..hd)
            .map(|i| {
                let z = sigmoid(gx[i] + zr[i]);
                let r = sigmoid(gx[hd + i] + zr[hd + i]);
                let n = (gx[2 * hd + i] + r * hn[i]).tanh();
                (1.0 - z) * n + z * h[i]
            })
            .collect()
    }

    pub fn forward_seq(&self, xs: &[Vec<f64>]) -> GruCache {
        let hd = self.hidden();
        let mut cache = GruCache {
            inputs: xs.to_vec(),
            hs: vec![self.h0.value.data.clone()],
            ..Default::default()
        };
        for x in xs {
            let h = cache.hs.last().expect("initial state");
            let mut gx = self.b.value.data.clone();
            self.wx.value.matvec_add(x, &mut gx);
            let mut gh = vec![0.0; 3 * hd];
            self.wh.value.matvec_add(h, &mut gh);
            let mut z = vec![0.0; hd];
            let mut r = vec![0.0; hd];
            let mut n = vec![0.0; hd];
            let mut hn = vec![0.0; hd];
            let mut next = vec![0.0; hd];
            for i in 0..hd {
                z[i] = sigmoid(gx[i] + gh[i]);
                r[i] = sigmoid(gx[hd + i] + gh[hd + i]);
                hn[i] = gh[2 * hd + i] + self.bhn.value.data[i];
                n[i] = (gx[2 * hd + i] + r[i] * hn[i]).tanh();
                next[i] = (1.0 - z[i]) * n[i] + z[i] * h[i];
            }
            cache.z.push(z);
            cache.r.push(r);
            cache.n.push(n);
            cache.hn.push(hn);
            cache.hs.push(next);
        }
        cache
    }

    /// Backpropagates `dhs` (one gradient per entry of `cache.hs`) through
    /// time, accumulating parameter gradients. Returns input gradients.
    pub fn backward_seq(&mut self, cache: &GruCache, dhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let hd = self.hidden();
        let steps = cache.inputs.len();
        debug_assert_eq!(dhs.len(), steps + 1);
        let mut dxs = vec![vec![0.0; self.input_dim()]; steps];
        let mut carry = vec![0.0; hd];
        let mut dgx = vec![0.0; 3 * hd];
        for t in (0..steps).rev() {
            let dh: Vec<f64> = carry.iter().zip(&dhs[t + 1]).map(|(a, b)| a + b).collect();
            let (z, r, n, hn, h) = (&cache.z[t], &cache.r[t], &cache.n[t], &cache.hn[t], &cache.hs[t]);
            let mut dhn = vec![0.0; hd];
            let mut prev = vec![0.0; hd];
            for i in 0..hd {
                let dn = dh[i] * (1.0 - z[i]);
                let dz = dh[i] * (h[i] - n[i]);
                prev[i] = dh[i] * z[i];
                let dan = dn * (1.0 - n[i] * n[i]);
                let dr = dan * hn[i];
                dhn[i] = dan * r[i];
                dgx[i] = dz * z[i] * (1.0 - z[i]);
                dgx[hd + i] = dr * r[i] * (1.0 - r[i]);
                dgx[2 * hd + i] = dan;
            }
            self.wx.grad.outer_rows_add(0, &dgx, &cache.inputs[t]);
            for (g, d) in self.b.grad.data.iter_mut().zip(&dgx) {
                *g += d;
            }
            self.wh.grad.outer_rows_add(0, &dgx[..2 * hd], h);
            self.wh.grad.outer_rows_add(2 * hd, &dhn, h);
            for (g, d) in self.bhn.grad.data.iter_mut().zip(&dhn) {
                *g += d;
            }
            self.wh.value.matvec_t_rows_add(0, &dgx[..2 * hd], &mut prev);
            self.wh.value.matvec_t_rows_add(2 * hd, &dhn, &mut prev);
            self.wx.value.matvec_t_rows_add(0, &dgx, &mut dxs[t]);
            carry = prev;
        }
        for ((g, c), d0) in self.h0.grad.data.iter_mut().zip(&carry).zip(&dhs[0]) {
            *g += c + d0;
        }
        dxs
    }
}

impl Module for GruLayer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "wx"), &self.wx);
        f(&join(prefix, "wh"), &self.wh);
        f(&join(prefix, "b"), &self.b);
        f(&join(prefix, "bhn"), &self.bhn);
        f(&join(prefix, "h0"), &self.h0);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "wx"), &mut self.wx);
        f(&join(prefix, "wh"), &mut self.wh);
        f(&join(prefix, "b"), &mut self.b);
        f(&join(prefix, "bhn"), &mut self.bhn);
        f(&join(prefix, "h0"), &mut self.h0);
    }
}

/// Stacked recurrent encoder over per-turn feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub layers: Vec<GruLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderCache {
    pub layers: Vec<GruCache>,
}

impl EncoderCache {
    /// Top-layer states; entry `t` encodes the first `t` inputs.
    pub fn states(&self) -> &[Vec<f64>] {
        &self.layers.last().expect("non-empty").hs
    }
}

impl Encoder {
    pub fn new(input: usize, hidden: usize, layers: usize, rng: &mut SimRng) -> Self {
        assert!(layers >= 1);
        let layers = (0..layers)
            .map(|i| GruLayer::new(if i == 0 { input } else { hidden }, hidden, rng))
            .collect();
        Encoder { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    /// Encodes every prefix of `xs`.
    pub fn forward(&self, xs: &[Vec<f64>]) -> EncoderCache {
        let mut caches: Vec<GruCache> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let cache = match caches.last() {
                None => layer.forward_seq(xs),
                Some(below) => layer.forward_seq(&below.hs[1..]),
            };
            caches.push(cache);
        }
        EncoderCache { layers: caches }
    }

    /// Final top-layer state only, without caching.
    pub fn encode(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        let mut seq: Vec<Vec<f64>> = xs.to_vec();
        let mut last = Vec::new();
        for layer in &self.layers {
            let mut h = layer.h0.value.data.clone();
            let mut outs = Vec::with_capacity(seq.len());
            for x in &seq {
                h = layer.step(x, &h);
                outs.push(h.clone());
            }
            last = h;
            seq = outs;
        }
        last
    }

    /// `dstates[t]` is the gradient on top-layer state `t`.
    pub fn backward(&mut self, cache: &EncoderCache, dstates: &[Vec<f64>]) {
        let mut grads = dstates.to_vec();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let dx = layer.backward_seq(&cache.layers[i], &grads);
            if i > 0 {
                // The layer below's state 0 is its own h0, never an input here.
                let mut below = Vec::with_capacity(dx.len() + 1);
                below.push(vec![0.0; dx.first().map_or(0, Vec::len)]);
                below.extend(dx);
                grads = below;
            }
        }
    }
}

impl Module for Encoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("gru{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("gru{i}")), f);
        }
    }
}
