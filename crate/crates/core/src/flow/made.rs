//! Masked dense layers and the conditional MADE network.
//!
//! Degrees: θ input `j` has degree `j + 1`, conditioning inputs degree 0,
//! hidden unit `u` degree `u mod d`. A connection into a hidden unit is kept
//! when its degree is at least the source degree; an output for dimension `i`
//! (degree `i + 1`) only sees hidden units of strictly smaller degree. Output
//! `i` therefore depends on `θ_{<i}` and on every conditioning input.

use serde::{Deserialize, Serialize};

/// `out = (W ⊙ mask) x + b`, weights row-major `out_dim × in_dim`.
///
/// Masked-out weights are held at exactly zero so the forward pass can use
/// the dense weights directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedDense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub mask: Vec<u8>,
}

impl MaskedDense {
    pub fn zeros(in_dim: usize, out_dim: usize, mask: Vec<u8>) -> Self {
        debug_assert_eq!(mask.len(), in_dim * out_dim);
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
            mask,
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn apply_mask(&mut self) {
        for (w, &m) in self.weights.iter_mut().zip(&self.mask) {
            if m == 0 {
                *w = 0.0;
            }
        }
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            *slot = self.biases[o] + dot(row, x);
        }
    }

    /// `out = base + W[:, ..x.len()] x`; `base` usually holds the bias plus
    /// the contribution of the trailing (conditioning) inputs.
    pub fn forward_head(&self, x: &[f64], base: &[f64], out: &mut [f64]) {
        let n = x.len();
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..o * self.in_dim + n];
            *slot = base[o] + dot(row, x);
        }
    }

    /// `out = b + W[:, offset..] c`.
    pub fn tail_contribution(&self, c: &[f64], offset: usize, out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim + offset..(o + 1) * self.in_dim];
            *slot = self.biases[o] + dot(row, c);
        }
    }

    /// Accumulates parameter gradients; writes `dL/dx[..g_in.len()]` if asked.
    pub fn backward(&self, x: &[f64], g_out: &[f64], grad: &mut DenseGrad, g_in: Option<&mut [f64]>) {
        for (o, &g) in g_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.biases[o] += g;
            let row = &mut grad.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mrow = &self.mask[o * self.in_dim..(o + 1) * self.in_dim];
            for ((gw, &xi), &m) in row.iter_mut().zip(x).zip(mrow) {
                if m != 0 {
                    *gw += g * xi;
                }
            }
        }
        if let Some(g_in) = g_in {
            g_in.iter_mut().for_each(|v| *v = 0.0);
            let n = g_in.len();
            for (o, &g) in g_out.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.weights[o * self.in_dim..o * self.in_dim + n];
                for (gi, &w) in g_in.iter_mut().zip(row) {
                    *gi += g * w;
                }
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize without reassociation.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseGrad {
    pub fn zeros_like(d: &MaskedDense) -> Self {
        Self {
            weights: vec![0.0; d.weights.len()],
            biases: vec![0.0; d.biases.len()],
        }
    }
}

/// Input `[θ (d); condition (k)]` → hidden → hidden → `d` outputs, ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedMlp {
    pub layers: [MaskedDense; 3],
}

pub fn hidden_degree(unit: usize, d: usize) -> usize {
    unit % d
}

impl MaskedMlp {
    pub fn zeros(d: usize, k: usize, hidden: usize) -> Self {
        let input_degree = |j: usize| if j < d { j + 1 } else { 0 };
        let mut m1 = vec![0u8; hidden * (d + k)];
        for u in 0..hidden {
            for j in 0..d + k {
                m1[u * (d + k) + j] = (hidden_degree(u, d) >= input_degree(j)) as u8;
            }
        }
        let mut m2 = vec![0u8; hidden * hidden];
        for u in 0..hidden {
            for v in 0..hidden {
                m2[u * hidden + v] = (hidden_degree(u, d) >= hidden_degree(v, d)) as u8;
            }
        }
        let mut m3 = vec![0u8; d * hidden];
        for i in 0..d {
            for v in 0..hidden {
                m3[i * hidden + v] = (i + 1 > hidden_degree(v, d)) as u8;
            }
        }
        Self {
            layers: [
                MaskedDense::zeros(d + k, hidden, m1),
                MaskedDense::zeros(hidden, hidden, m2),
                MaskedDense::zeros(hidden, d, m3),
            ],
        }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].out_dim
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(MaskedDense::n_params).sum()
    }

    pub fn apply_masks(&mut self) {
        self.layers.iter_mut().for_each(MaskedDense::apply_mask);
    }

    /// Evaluates the net from the θ part of the input, with the first layer's
    /// bias and conditioning contribution supplied in `first_base`.
    pub fn forward_cached(&self, theta: &[f64], first_base: &[f64], act: &mut MlpActivations) {
        self.layers[0].forward_head(theta, first_base, &mut act.h1);
        relu(&mut act.h1);
        self.layers[1].forward(&act.h1, &mut act.h2);
        relu(&mut act.h2);
        self.layers[2].forward(&act.h2, &mut act.out);
    }

    /// Full forward on `input = [θ; c]`.
    pub fn forward(&self, input: &[f64], act: &mut MlpActivations) {
        self.layers[0].forward(input, &mut act.h1);
        relu(&mut act.h1);
        self.layers[1].forward(&act.h1, &mut act.h2);
        relu(&mut act.h2);
        self.layers[2].forward(&act.h2, &mut act.out);
    }

    /// Backpropagates `g_out` (gradient w.r.t. outputs). Accumulates parameter
    /// gradients and writes the gradient w.r.t. the θ inputs into `g_theta`.
    pub fn backward(
        &self,
        input: &[f64],
        act: &MlpActivations,
        g_out: &[f64],
        grad: &mut MlpGrad,
        scratch: &mut MlpScratch,
        g_theta: &mut [f64],
    ) {
        self.layers[2].backward(&act.h2, g_out, &mut grad.layers[2], Some(&mut scratch.g2));
        for (g, &h) in scratch.g2.iter_mut().zip(&act.h2) {
            if h <= 0.0 {
                *g = 0.0;
            }
        }
        self.layers[1].backward(&act.h1, &scratch.g2, &mut grad.layers[1], Some(&mut scratch.g1));
        for (g, &h) in scratch.g1.iter_mut().zip(&act.h1) {
            if h <= 0.0 {
                *g = 0.0;
            }
        }
        self.layers[0].backward(input, &scratch.g1, &mut grad.layers[0], Some(g_theta));
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpActivations {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub out: Vec<f64>,
}

impl MlpActivations {
    pub fn new(hidden: usize, d: usize) -> Self {
        Self {
            h1: vec![0.0; hidden],
            h2: vec![0.0; hidden],
            out: vec![0.0; d],
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpScratch {
    g1: Vec<f64>,
    g2: Vec<f64>,
}

impl MlpScratch {
    pub fn new(hidden: usize) -> Self {
        Self {
            g1: vec![0.0; hidden],
            g2: vec![0.0; hidden],
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpGrad {
    pub layers: [DenseGrad; 3],
}

impl MlpGrad {
    pub fn zeros_like(m: &MaskedMlp) -> Self {
        Self {
            layers: [
                DenseGrad::zeros_like(&m.layers[0]),
                DenseGrad::zeros_like(&m.layers[1]),
                DenseGrad::zeros_like(&m.layers[2]),
            ],
        }
    }
}
