//! Conditional masked autoregressive flow `p(θ | condition)`.
//!
//! Sampling maps a standard-normal `z` through `n_layers` pairs of
//! (masked affine, fixed permutation):
//!
//! ```text
//! x_0 = z
//! a_i = μ_i(a_{<i}, c) + exp(s_i(a_{<i}, c)) · x_{l,i}      (affine l, sequential in i)
//! x_{l+1}[j] = a[perm_l[j]]                                  (permutation l)
//! θ = x_L
//! ```
//!
//! The conditioner networks read the output side `a` of each affine layer, so
//! the density direction `θ → z` needs a single network pass per layer:
//! `x_{l,i} = (a_i − μ_i(a, c)) · exp(−s_i(a, c))` and
//! `log p(θ | c) = log N(z; 0, I) − Σ_l Σ_i s_{l,i}`.
//!
//! `c` is the condition after standardization with the frozen [`CondNorm`].
//! Scales are `exp(clamp(s, −7, 7))`.

pub mod checkpoint;
pub mod dataset;
pub mod made;
pub mod train;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ParamSpace, ParamVector};
use crate::error::{Error, Result};
use crate::seed;
use crate::stats::CondNorm;

pub use checkpoint::{load_model, save_model};
pub use dataset::{Dataset, Sample, SampleTag};
pub use made::{MaskedDense, MaskedMlp};
pub use train::{train, Adam, EarlyStopping, TrainConfig, TrainReport};

use made::{MlpActivations, MlpGrad, MlpScratch};

pub const LOG_SCALE_CLAMP: f64 = 7.0;
/// Bound on standardized condition entries. Summary statistics of short or
/// near-degenerate spans have rare far outliers that the ReLU conditioner
/// would otherwise extrapolate into collapsed densities.
pub const COND_CLIP: f64 = 10.0;
pub const DEFAULT_HIDDEN: usize = 50;
pub const DEFAULT_LAYERS: usize = 5;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// One masked affine transform: separate location and log-scale networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MafLayer {
    pub mu_net: MaskedMlp,
    pub s_net: MaskedMlp,
}

impl MafLayer {
    fn nets(&self) -> [&MaskedMlp; 2] {
        [&self.mu_net, &self.s_net]
    }

    fn nets_mut(&mut self) -> [&mut MaskedMlp; 2] {
        [&mut self.mu_net, &mut self.s_net]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    d: usize,
    k: usize,
    hidden: usize,
    perm_seed: u64,
    layers: Vec<MafLayer>,
    permutations: Vec<Vec<usize>>,
    cond_norm: CondNorm,
}

/// A posterior draw after clamping into the parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub theta: ParamVector,
    pub clamped: bool,
}

fn clamp_s(raw: f64) -> f64 {
    raw.clamp(-LOG_SCALE_CLAMP, LOG_SCALE_CLAMP)
}

fn in_clamp_band(raw: f64) -> bool {
    raw > -LOG_SCALE_CLAMP && raw < LOG_SCALE_CLAMP
}

pub fn random_permutations(d: usize, n_layers: usize, perm_seed: u64) -> Vec<Vec<usize>> {
    let mut rng = seed::rng(perm_seed);
    (0..n_layers)
        .map(|_| {
            let mut p: Vec<usize> = (0..d).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect()
}

impl FlowModel {
    /// All weights and biases zero: the flow is a pure permutation of `z`.
    pub fn zeroed(d: usize, k: usize, hidden: usize, n_layers: usize, perm_seed: u64) -> Self {
        assert!(
            d >= 1 && hidden >= 1 && n_layers >= 1,
            "flow dimensions must be positive"
        );
        let layers = (0..n_layers)
            .map(|_| MafLayer {
                mu_net: MaskedMlp::zeros(d, k, hidden),
                s_net: MaskedMlp::zeros(d, k, hidden),
            })
            .collect();
        Self {
            d,
            k,
            hidden,
            perm_seed,
            layers,
            permutations: random_permutations(d, n_layers, perm_seed),
            cond_norm: CondNorm::identity(k),
        }
    }

    /// Training initialization: hidden weights `N(0, 1/fan_in)`, output
    /// weights and every bias zero. The initial flow is still a permutation.
    pub fn new<R: rand::Rng + ?Sized>(
        d: usize,
        k: usize,
        hidden: usize,
        n_layers: usize,
        perm_seed: u64,
        rng: &mut R,
    ) -> Self {
        let mut m = Self::zeroed(d, k, hidden, n_layers, perm_seed);
        for layer in &mut m.layers {
            for net in layer.nets_mut() {
                for dense in &mut net.layers[..2] {
                    let normal = Normal::new(0.0, (1.0 / dense.in_dim as f64).sqrt()).unwrap();
                    for w in &mut dense.weights {
                        *w = normal.sample(rng);
                    }
                    dense.apply_mask();
                }
            }
        }
        m
    }

    /// Default architecture: hidden width 50, five layers.
    pub fn standard<R: rand::Rng + ?Sized>(d: usize, k: usize, perm_seed: u64, rng: &mut R) -> Self {
        Self::new(d, k, DEFAULT_HIDDEN, DEFAULT_LAYERS, perm_seed, rng)
    }

    /// Adds `N(0, std²)` to every trainable parameter.
    pub fn perturb<R: rand::Rng + ?Sized>(&mut self, std: f64, rng: &mut R) {
        let normal = Normal::new(0.0, std).unwrap();
        let mut p = self.params();
        for v in &mut p {
            *v += normal.sample(rng);
        }
        self.set_params(&p);
    }

    pub(crate) fn from_parts(
        d: usize,
        k: usize,
        hidden: usize,
        perm_seed: u64,
        layers: Vec<MafLayer>,
        permutations: Vec<Vec<usize>>,
        cond_norm: CondNorm,
    ) -> Self {
        Self {
            d,
            k,
            hidden,
            perm_seed,
            layers,
            permutations,
            cond_norm,
        }
    }

    pub fn dims(&self) -> usize {
        self.d
    }

    pub fn cond_dims(&self) -> usize {
        self.k
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn perm_seed(&self) -> u64 {
        self.perm_seed
    }

    pub fn layers(&self) -> &[MafLayer] {
        &self.layers
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.permutations
    }

    pub fn cond_norm(&self) -> &CondNorm {
        &self.cond_norm
    }

    pub fn set_cond_norm(&mut self, norm: CondNorm) {
        assert_eq!(norm.len(), self.k, "condition normalization width");
        self.cond_norm = norm;
    }

    /// Composite permutation applied by the zero-weight model:
    /// `θ[j] = z[composite[j]]`.
    pub fn composite_permutation(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.d).collect();
        for perm in &self.permutations {
            idx = perm.iter().map(|&p| idx[p]).collect();
        }
        idx
    }

    // --- flat parameter view -------------------------------------------

    pub fn n_params(&self) -> usize {
        self.layers.iter().flat_map(|l| l.nets()).map(MaskedMlp::n_params).sum()
    }

    /// Layer-major order: for each affine layer, the μ-net then the s-net;
    /// within a net, each dense layer's weights (row-major) then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            for net in layer.nets() {
                for dense in &net.layers {
                    out.extend_from_slice(&dense.weights);
                    out.extend_from_slice(&dense.biases);
                }
            }
        }
        out
    }

    /// Inverse of [`params`](Self::params). Masked entries are forced to zero.
    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "parameter vector length");
        let mut off = 0;
        for layer in &mut self.layers {
            for net in layer.nets_mut() {
                for dense in &mut net.layers {
                    let nw = dense.weights.len();
                    dense.weights.copy_from_slice(&flat[off..off + nw]);
                    off += nw;
                    let nb = dense.biases.len();
                    dense.biases.copy_from_slice(&flat[off..off + nb]);
                    off += nb;
                    dense.apply_mask();
                }
            }
        }
    }

    // --- evaluation ----------------------------------------------------

    fn check_cond(&self, cond: &[f64]) -> Result<()> {
        if cond.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: cond.len(),
            });
        }
        if cond.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    /// Standardized, clipped network input for a raw condition.
    pub fn standardized(&self, cond: &[f64]) -> Vec<f64> {
        let mut c = self.cond_norm.standardize(cond);
        c.iter_mut().for_each(|v| *v = v.clamp(-COND_CLIP, COND_CLIP));
        c
    }

    /// Fixes the condition and caches its first-layer contribution.
    pub fn conditioned(&self, cond: &[f64]) -> Result<Conditioned<'_>> {
        self.check_cond(cond)?;
        let c = self.standardized(cond);
        let bases = self
            .layers
            .iter()
            .map(|layer| {
                layer.nets().map(|net| {
                    let mut base = vec![0.0; self.hidden];
                    net.layers[0].tail_contribution(&c, self.d, &mut base);
                    base
                })
            })
            .collect();
        Ok(Conditioned { model: self, bases })
    }

    /// `θ = f(z; condition)`.
    pub fn forward_sample(&self, cond: &[f64], z: &[f64]) -> Result<ParamVector> {
        Ok(ParamVector(self.conditioned(cond)?.sample(z)))
    }

    /// `(z, log p(θ | condition))`.
    pub fn inverse_logprob(&self, cond: &[f64], theta: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.conditioned(cond)?.inverse_logprob(theta)
    }

    pub fn log_prob(&self, cond: &[f64], theta: &[f64]) -> Result<f64> {
        Ok(self.inverse_logprob(cond, theta)?.1)
    }

    /// `n` independent draws, each clamped into `space` and flagged.
    pub fn posterior_sample<R: rand::Rng + ?Sized>(
        &self,
        cond: &[f64],
        n: usize,
        space: &ParamSpace,
        rng: &mut R,
    ) -> Result<Vec<PosteriorDraw>> {
        let c = self.conditioned(cond)?;
        Ok((0..n)
            .map(|_| {
                let mut theta = c.sample_with(rng);
                let clamped = space.clamp(&mut theta);
                PosteriorDraw {
                    theta: ParamVector(theta),
                    clamped,
                }
            })
            .collect())
    }

    // --- training objective --------------------------------------------

    /// `−(1/B) Σ log p(θ_m | c_m)` and its exact gradient in
    /// [`params`](Self::params) order.
    pub fn loss_and_grad<'s, I>(&self, batch: I) -> (f64, Vec<f64>)
    where
        I: IntoIterator<Item = &'s Sample>,
    {
        let batch: Vec<&Sample> = batch.into_iter().collect();
        assert!(!batch.is_empty(), "empty batch");
        let w = 1.0 / batch.len() as f64;
        let mut grads: Vec<[MlpGrad; 2]> = self
            .layers
            .iter()
            .map(|l| [MlpGrad::zeros_like(&l.mu_net), MlpGrad::zeros_like(&l.s_net)])
            .collect();
        let mut tape = Tape::new(self);
        let mut loss = 0.0;
        for s in batch {
            let logp = self.tape_inverse(&s.theta, &s.cond, &mut tape);
            loss -= w * logp;
            self.tape_backward(w, &mut tape, &mut grads);
        }
        (loss, flatten_grads(&grads))
    }

    /// Loss only; same value as [`loss_and_grad`](Self::loss_and_grad).
    pub fn loss<'s, I>(&self, batch: I) -> f64
    where
        I: IntoIterator<Item = &'s Sample>,
    {
        let mut tape = Tape::new(self);
        let mut n = 0usize;
        let mut total = 0.0;
        for s in batch {
            total -= self.tape_inverse(&s.theta, &s.cond, &mut tape);
            n += 1;
        }
        assert!(n > 0, "empty batch");
        total / n as f64
    }

    /// Unclamped log-scale outputs of every layer along the density pass,
    /// indexed `[layer][dim]`.
    pub fn raw_log_scales(&self, cond: &[f64], theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_cond(cond)?;
        if theta.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: theta.len(),
            });
        }
        let mut tape = Tape::new(self);
        self.tape_inverse(theta, cond, &mut tape);
        Ok(tape.layers.iter().map(|r| r.s.out.clone()).collect())
    }

    /// Records the density pass for one sample; returns `log p`.
    fn tape_inverse(&self, theta: &[f64], cond: &[f64], tape: &mut Tape) -> f64 {
        let (d, k) = (self.d, self.k);
        let c = self.standardized(cond);
        tape.cur.copy_from_slice(theta);
        let mut log_det = 0.0;
        for l in (0..self.layers.len()).rev() {
            let rec = &mut tape.layers[l];
            for (j, &p) in self.permutations[l].iter().enumerate() {
                rec.input[p] = tape.cur[j];
            }
            rec.input[d..d + k].copy_from_slice(&c);
            let layer = &self.layers[l];
            layer.mu_net.forward(&rec.input, &mut rec.mu);
            layer.s_net.forward(&rec.input, &mut rec.s);
            for i in 0..d {
                let s = clamp_s(rec.s.out[i]);
                rec.u[i] = (rec.input[i] - rec.mu.out[i]) * (-s).exp();
                log_det -= s;
            }
            tape.cur.copy_from_slice(&rec.u);
        }
        let sq: f64 = tape.cur.iter().map(|v| v * v).sum();
        -0.5 * sq - d as f64 * HALF_LN_2PI + log_det
    }

    /// Adds `w · ∂(−log p)/∂φ` for the sample last recorded on `tape`.
    fn tape_backward(&self, w: f64, tape: &mut Tape, grads: &mut [[MlpGrad; 2]]) {
        let d = self.d;
        // gradient w.r.t. z
        for (g, &z) in tape.g.iter_mut().zip(&tape.cur) {
            *g = w * z;
        }
        for l in 0..self.layers.len() {
            let rec = &tape.layers[l];
            let layer = &self.layers[l];
            for i in 0..d {
                let raw = rec.s.out[i];
                let inv_sigma = (-clamp_s(raw)).exp();
                let gu = tape.g[i];
                tape.g_mu[i] = -gu * inv_sigma;
                tape.g_s[i] = if in_clamp_band(raw) { w - gu * rec.u[i] } else { 0.0 };
                tape.g_a[i] = gu * inv_sigma;
            }
            let [gm, gs] = &mut grads[l];
            layer
                .mu_net
                .backward(&rec.input, &rec.mu, &tape.g_mu, gm, &mut tape.scratch, &mut tape.g_in);
            for i in 0..d {
                tape.g_a[i] += tape.g_in[i];
            }
            layer
                .s_net
                .backward(&rec.input, &rec.s, &tape.g_s, gs, &mut tape.scratch, &mut tape.g_in);
            for i in 0..d {
                tape.g_a[i] += tape.g_in[i];
            }
            for (j, &p) in self.permutations[l].iter().enumerate() {
                tape.g[j] = tape.g_a[p];
            }
        }
    }
}

fn flatten_grads(grads: &[[MlpGrad; 2]]) -> Vec<f64> {
    let mut out = Vec::new();
    for pair in grads {
        for net in pair {
            for dense in &net.layers {
                out.extend_from_slice(&dense.weights);
                out.extend_from_slice(&dense.biases);
            }
        }
    }
    out
}

struct LayerRecord {
    /// `[a; c]`, the conditioner input.
    input: Vec<f64>,
    mu: MlpActivations,
    s: MlpActivations,
    /// Output of the inverse affine step, `x_l`.
    u: Vec<f64>,
}

struct Tape {
    layers: Vec<LayerRecord>,
    cur: Vec<f64>,
    g: Vec<f64>,
    g_mu: Vec<f64>,
    g_s: Vec<f64>,
    g_a: Vec<f64>,
    g_in: Vec<f64>,
    scratch: MlpScratch,
}

impl Tape {
    fn new(m: &FlowModel) -> Self {
        let (d, k, h) = (m.d, m.k, m.hidden);
        Self {
            layers: (0..m.layers.len())
                .map(|_| LayerRecord {
                    input: vec![0.0; d + k],
                    mu: MlpActivations::new(h, d),
                    s: MlpActivations::new(h, d),
                    u: vec![0.0; d],
                })
                .collect(),
            cur: vec![0.0; d],
            g: vec![0.0; d],
            g_mu: vec![0.0; d],
            g_s: vec![0.0; d],
            g_a: vec![0.0; d],
            g_in: vec![0.0; d],
            scratch: MlpScratch::new(h),
        }
    }
}

/// A model with a fixed condition; the condition's share of every first
/// hidden layer is precomputed.
pub struct Conditioned<'a> {
    model: &'a FlowModel,
    bases: Vec<[Vec<f64>; 2]>,
}

struct EvalBuf {
    mu: MlpActivations,
    s: MlpActivations,
    a: Vec<f64>,
    x: Vec<f64>,
}

impl<'a> Conditioned<'a> {
    pub fn model(&self) -> &'a FlowModel {
        self.model
    }

    fn buf(&self) -> EvalBuf {
        let (d, h) = (self.model.d, self.model.hidden);
        EvalBuf {
            mu: MlpActivations::new(h, d),
            s: MlpActivations::new(h, d),
            a: vec![0.0; d],
            x: vec![0.0; d],
        }
    }

    fn eval_nets(&self, l: usize, a: &[f64], buf_mu: &mut MlpActivations, buf_s: &mut MlpActivations) {
        let layer = &self.model.layers[l];
        layer.mu_net.forward_cached(a, &self.bases[l][0], buf_mu);
        layer.s_net.forward_cached(a, &self.bases[l][1], buf_s);
    }

    /// `θ = f(z)`; `z` must have length `d`.
    pub fn sample(&self, z: &[f64]) -> Vec<f64> {
        let d = self.model.d;
        assert_eq!(z.len(), d, "latent length");
        let mut b = self.buf();
        b.x.copy_from_slice(z);
        for l in 0..self.model.layers.len() {
            b.a.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..d {
                self.eval_nets(l, &b.a, &mut b.mu, &mut b.s);
                b.a[i] = b.mu.out[i] + clamp_s(b.s.out[i]).exp() * b.x[i];
            }
            for (j, &p) in self.model.permutations[l].iter().enumerate() {
                b.x[j] = b.a[p];
            }
        }
        b.x
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.model.d).map(|_| StandardNormal.sample(rng)).collect();
        self.sample(&z)
    }

    /// `(z, log p(θ))`.
    pub fn inverse_logprob(&self, theta: &[f64]) -> Result<(Vec<f64>, f64)> {
        let d = self.model.d;
        if theta.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let mut b = self.buf();
        b.x.copy_from_slice(theta);
        let mut log_det = 0.0;
        for l in (0..self.model.layers.len()).rev() {
            for (j, &p) in self.model.permutations[l].iter().enumerate() {
                b.a[p] = b.x[j];
            }
            self.eval_nets(l, &b.a, &mut b.mu, &mut b.s);
            for i in 0..d {
                let s = clamp_s(b.s.out[i]);
                b.x[i] = (b.a[i] - b.mu.out[i]) * (-s).exp();
                log_det -= s;
            }
        }
        let sq: f64 = b.x.iter().map(|v| v * v).sum();
        let logp = -0.5 * sq - d as f64 * HALF_LN_2PI + log_det;
        Ok((b.x, logp))
    }

    pub fn log_prob(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.inverse_logprob(theta)?.1)
    }
}
