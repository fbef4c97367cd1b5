use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::agree::PerceptionOutput;
use crate::rng;

/// What a classifier emits for one input segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// `m` independent binary variables.
    Bernoulli(usize),
    /// One categorical variable over `k` classes, encoded one-hot.
    Categorical(usize),
}

impl Head {
    pub fn width(&self) -> usize {
        match *self {
            Head::Bernoulli(m) => m,
            Head::Categorical(k) => k,
        }
    }
}

/// An input is a sequence of segments (one image, one grid cell, ...),
/// each mapped by the same classifier onto its own block of variables.
/// Segment `s` owns variables `s·w .. (s+1)·w` for head width `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Input {
    pub segments: Vec<Vec<f64>>,
}

impl Input {
    pub fn new(segments: Vec<Vec<f64>>) -> Self {
        Input { segments }
    }

    pub fn single(x: Vec<f64>) -> Self {
        Input { segments: vec![x] }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// A differentiable classifier with a flat parameter vector.
pub trait PerceptionModel: Send + Sync {
    fn head(&self) -> Head;
    fn input_dim(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Logits for one segment, `head().width()` of them.
    fn logits(&self, x: &[f64]) -> Vec<f64>;

    /// Adds `∂L/∂p` to `grad` given `∂L/∂logits` for one segment.
    fn backward(&self, x: &[f64], dlogits: &[f64], grad: &mut [f64]);

    fn num_params(&self) -> usize {
        self.params().len()
    }

    /// Per-segment probabilities, flattened in variable order.
    fn segment_probs(&self, x: &[f64]) -> Vec<f64> {
        let z = self.logits(x);
        match self.head() {
            Head::Bernoulli(_) => z.into_iter().map(sigmoid).collect(),
            Head::Categorical(_) => softmax(&z),
        }
    }

    fn forward(&self, input: &Input) -> PerceptionOutput {
        let w = self.head().width();
        let mut probs = Vec::with_capacity(w * input.len());
        for seg in &input.segments {
            probs.extend(self.segment_probs(seg));
        }
        let groups = match self.head() {
            Head::Bernoulli(_) => Vec::new(),
            Head::Categorical(k) => (0..input.len()).map(|s| s * k..(s + 1) * k).collect(),
        };
        let mut out = PerceptionOutput::with_groups(probs.clone(), groups.clone());
        if out.is_err() {
            // Renormalize softmax rounding before giving up.
            for g in &groups {
                let s: f64 = probs[g.clone()].iter().sum();
                probs[g.clone()].iter_mut().for_each(|p| *p /= s);
            }
            out = PerceptionOutput::with_groups(probs, groups);
        }
        out.expect("model outputs are valid probabilities")
    }

    /// Most likely class of each segment (categorical heads) or the
    /// thresholded bits (Bernoulli heads), flattened.
    fn predict(&self, x: &[f64]) -> Vec<usize> {
        let z = self.logits(x);
        match self.head() {
            Head::Bernoulli(_) => z.iter().map(|&v| usize::from(v > 0.0)).collect(),
            Head::Categorical(_) => vec![argmax(&z)],
        }
    }
}

pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

fn init_normal(params: &mut [f64], std: f64, rng: &mut impl Rng) {
    let normal = Normal::new(0.0, std).expect("positive std");
    for p in params {
        *p = normal.sample(rng);
    }
}

/// Affine map followed by a sigmoid or softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSoftmaxModel {
    input_dim: usize,
    head: Head,
    /// Row-major `out × in` weights followed by `out` biases.
    params: Vec<f64>,
}

impl LinearSoftmaxModel {
    pub fn zeros(input_dim: usize, head: Head) -> Self {
        LinearSoftmaxModel {
            input_dim,
            head,
            params: vec![0.0; head.width() * (input_dim + 1)],
        }
    }

    pub fn new(input_dim: usize, head: Head, seed: u64) -> Self {
        let mut m = Self::zeros(input_dim, head);
        let n = head.width() * input_dim;
        let std = 1.0 / (input_dim.max(1) as f64).sqrt();
        init_normal(&mut m.params[..n], std, &mut rng::seeded(seed));
        m
    }

    pub fn from_params(input_dim: usize, head: Head, params: Vec<f64>) -> Option<Self> {
        (params.len() == head.width() * (input_dim + 1)).then_some(LinearSoftmaxModel {
            input_dim,
            head,
            params,
        })
    }
}

impl PerceptionModel for LinearSoftmaxModel {
    fn head(&self) -> Head {
        self.head
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (d, w) = (self.input_dim, self.head.width());
        let (weights, bias) = self.params.split_at(w * d);
        (0..w)
            .map(|o| bias[o] + dot(&weights[o * d..(o + 1) * d], x))
            .collect()
    }

    fn backward(&self, x: &[f64], dlogits: &[f64], grad: &mut [f64]) {
        let (d, w) = (self.input_dim, self.head.width());
        let (gw, gb) = grad.split_at_mut(w * d);
        for o in 0..w {
            let g = dlogits[o];
            if g == 0.0 {
                continue;
            }
            gb[o] += g;
            axpy(g, x, &mut gw[o * d..(o + 1) * d]);
        }
    }
}

/// One hidden rectifier layer between input and head.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    hidden: usize,
    head: Head,
    /// `W1 (hidden × in)`, `b1`, `W2 (out × hidden)`, `b2`.
    params: Vec<f64>,
}

impl MlpModel {
    fn size(input_dim: usize, hidden: usize, head: Head) -> usize {
        hidden * (input_dim + 1) + head.width() * (hidden + 1)
    }

    pub fn new(input_dim: usize, hidden: usize, head: Head, seed: u64) -> Self {
        let mut params = vec![0.0; Self::size(input_dim, hidden, head)];
        let mut r = rng::seeded(seed);
        let w1 = hidden * input_dim;
        init_normal(&mut params[..w1], (2.0 / input_dim.max(1) as f64).sqrt(), &mut r);
        let w2 = w1 + hidden;
        init_normal(
            &mut params[w2..w2 + head.width() * hidden],
            (1.0 / hidden.max(1) as f64).sqrt(),
            &mut r,
        );
        MlpModel {
            input_dim,
            hidden,
            head,
            params,
        }
    }

    pub fn from_params(input_dim: usize, hidden: usize, head: Head, params: Vec<f64>) -> Option<Self> {
        (params.len() == Self::size(input_dim, hidden, head)).then_some(MlpModel {
            input_dim,
            hidden,
            head,
            params,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Pre-activations of the hidden layer.
    fn hidden_pre(&self, x: &[f64]) -> Vec<f64> {
        let (d, h) = (self.input_dim, self.hidden);
        let w1 = &self.params[..h * d];
        let b1 = &self.params[h * d..h * d + h];
        (0..h).map(|j| b1[j] + dot(&w1[j * d..(j + 1) * d], x)).collect()
    }
}

impl PerceptionModel for MlpModel {
    fn head(&self) -> Head {
        self.head
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (d, h, w) = (self.input_dim, self.hidden, self.head.width());
        let a: Vec<f64> = self.hidden_pre(x).into_iter().map(|v| v.max(0.0)).collect();
        let off = h * (d + 1);
        let w2 = &self.params[off..off + w * h];
        let b2 = &self.params[off + w * h..];
        (0..w).map(|o| b2[o] + dot(&w2[o * h..(o + 1) * h], &a)).collect()
    }

    fn backward(&self, x: &[f64], dlogits: &[f64], grad: &mut [f64]) {
        let (d, h, w) = (self.input_dim, self.hidden, self.head.width());
        let pre = self.hidden_pre(x);
        let a: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        let off = h * (d + 1);
        let w2 = &self.params[off..off + w * h];
        let (g1, g2) = grad.split_at_mut(off);
        let (gw2, gb2) = g2.split_at_mut(w * h);
        let mut da = vec![0.0; h];
        for o in 0..w {
            let g = dlogits[o];
            if g == 0.0 {
                continue;
            }
            gb2[o] += g;
            axpy(g, &a, &mut gw2[o * h..(o + 1) * h]);
            axpy(g, &w2[o * h..(o + 1) * h], &mut da);
        }
        let (gw1, gb1) = g1.split_at_mut(h * d);
        for j in 0..h {
            if pre[j] <= 0.0 || da[j] == 0.0 {
                continue;
            }
            gb1[j] += da[j];
            axpy(da[j], x, &mut gw1[j * d..(j + 1) * d]);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Either reference model, for code that picks one at runtime.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Linear(LinearSoftmaxModel),
    Mlp(MlpModel),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyModel::Linear($m) => $e,
            AnyModel::Mlp($m) => $e,
        }
    };
}

impl PerceptionModel for AnyModel {
    fn head(&self) -> Head {
        delegate!(self, m => m.head())
    }

    fn input_dim(&self) -> usize {
        delegate!(self, m => m.input_dim())
    }

    fn params(&self) -> &[f64] {
        delegate!(self, m => m.params())
    }

    fn params_mut(&mut self) -> &mut [f64] {
        delegate!(self, m => m.params_mut())
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        delegate!(self, m => m.logits(x))
    }

    fn backward(&self, x: &[f64], dlogits: &[f64], grad: &mut [f64]) {
        delegate!(self, m => m.backward(x, dlogits, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_shapes() {
        let m = MlpModel::new(3, 4, Head::Categorical(5), 1);
        let out = m.forward(&Input::new(vec![vec![0.1, 0.2, 0.3], vec![1.0, 0.0, -1.0]]));
        assert_eq!(out.len(), 10);
        assert_eq!(out.groups(), &[0..5, 5..10]);
        let l = LinearSoftmaxModel::new(2, Head::Bernoulli(3), 1);
        let out = l.forward(&Input::single(vec![0.5, -0.5]));
        assert_eq!(out.len(), 3);
        assert!(out.groups().is_empty());
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = LinearSoftmaxModel::zeros(2, Head::Categorical(4));
        let out = m.forward(&Input::single(vec![3.0, 1.0]));
        assert!(out.probs().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn stable_sigmoid() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
    }
}
