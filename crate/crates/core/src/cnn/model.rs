//! Single-layer convolutional classifier over token embeddings.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embeddings::{EmbeddingTable, PAD_TOKEN};
use crate::contexts::Label;
use crate::error::{Error, Result};

pub const N_CLASSES: usize = 3;
/// Output classes in index order; argmax ties resolve to the lowest index.
pub const CLASSES: [Label; N_CLASSES] = [Label::After, Label::Before, Label::Other];

/// Examples per gradient partial sum. Partial sums are added in chunk order,
/// so results do not depend on the thread count.
const CHUNK: usize = 8;

pub fn class_index(label: Label) -> Result<usize> {
    CLASSES
        .iter()
        .position(|&c| c == label)
        .ok_or_else(|| Error::input("unlabeled instance in a training batch"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub dim: usize,
    pub window: usize,
    pub filters: usize,
}

impl ModelShape {
    pub fn new(dim: usize, window: usize, filters: usize) -> Self {
        ModelShape { dim, window, filters }
    }

    fn filter_len(&self) -> usize {
        self.window * self.dim
    }
}

/// Convolution filters `conv_w` (filters × window × dim, row-major), their
/// biases, and the softmax layer `out_w` (classes × filters) with `out_b`.
/// Gradients share this layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub shape: ModelShape,
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

pub const BLOCK_NAMES: [&str; 4] = ["conv_w", "conv_b", "out_w", "out_b"];

impl ModelParams {
    pub fn zeros(shape: ModelShape) -> Self {
        ModelParams {
            shape,
            conv_w: vec![0.0; shape.filters * shape.filter_len()],
            conv_b: vec![0.0; shape.filters],
            out_w: vec![0.0; N_CLASSES * shape.filters],
            out_b: vec![0.0; N_CLASSES],
        }
    }

    /// Every parameter drawn from uniform(−scale, scale).
    pub fn random<R: Rng>(shape: ModelShape, scale: f64, rng: &mut R) -> Self {
        let mut p = ModelParams::zeros(shape);
        for (_, block) in p.blocks_mut() {
            for x in block.iter_mut() {
                *x = rng.gen_range(-scale..scale);
            }
        }
        p
    }

    pub fn blocks(&self) -> [(&'static str, &[f64]); 4] {
        [
            (BLOCK_NAMES[0], &self.conv_w),
            (BLOCK_NAMES[1], &self.conv_b),
            (BLOCK_NAMES[2], &self.out_w),
            (BLOCK_NAMES[3], &self.out_b),
        ]
    }

    pub fn blocks_mut(&mut self) -> [(&'static str, &mut [f64]); 4] {
        [
            (BLOCK_NAMES[0], &mut self.conv_w),
            (BLOCK_NAMES[1], &mut self.conv_b),
            (BLOCK_NAMES[2], &mut self.out_w),
            (BLOCK_NAMES[3], &mut self.out_b),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn check_shape(&self) -> Result<()> {
        let expected = ModelParams::zeros(self.shape);
        for ((name, a), (_, b)) in self.blocks().iter().zip(expected.blocks().iter()) {
            if a.len() != b.len() {
                return Err(Error::format(format!("block `{name}` has {} values, shape requires {}", a.len(), b.len())));
            }
        }
        Ok(())
    }

    /// First block holding a non-finite value.
    pub fn non_finite_block(&self) -> Option<&'static str> {
        self.blocks()
            .into_iter()
            .find(|(_, b)| b.iter().any(|x| !x.is_finite()))
            .map(|(n, _)| n)
    }

    fn add_assign(&mut self, other: &ModelParams) {
        for ((_, a), (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Token sequence mapped to rows of a [`VectorCache`]. Row 0 is padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    ids: Vec<u32>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }
}

/// Embedding rows for the tokens seen so far, computed once per token.
#[derive(Debug, Clone)]
pub struct VectorCache<'t> {
    table: &'t EmbeddingTable,
    ids: HashMap<String, u32>,
    rows: Vec<f64>,
}

impl<'t> VectorCache<'t> {
    pub fn new(table: &'t EmbeddingTable) -> Self {
        VectorCache {
            table,
            ids: HashMap::new(),
            rows: vec![0.0; table.dim()],
        }
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn encode(&mut self, tokens: &[String]) -> Result<Sequence> {
        if tokens.is_empty() {
            return Err(Error::input("empty token sequence"));
        }
        let ids = tokens.iter().map(|t| self.id(t)).collect();
        Ok(Sequence { ids })
    }

    fn id(&mut self, token: &str) -> u32 {
        if token == PAD_TOKEN {
            return 0;
        }
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let dim = self.table.dim();
        let id = (self.rows.len() / dim.max(1)) as u32;
        let start = self.rows.len();
        self.rows.resize(start + dim, 0.0);
        self.table.lookup_into(token, &mut self.rows[start..]);
        self.ids.insert(token.to_string(), id);
        id
    }

    pub fn row(&self, id: u32) -> &[f64] {
        let dim = self.table.dim();
        &self.rows[id as usize * dim..(id as usize + 1) * dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: [f64; N_CLASSES],
    pub label: Label,
    pub confidence: f64,
}

impl Prediction {
    fn from_probs(probs: [f64; N_CLASSES]) -> Self {
        let mut best = 0;
        for c in 1..N_CLASSES {
            if probs[c] > probs[best] {
                best = c;
            }
        }
        Prediction {
            probs,
            label: CLASSES[best],
            confidence: probs[best],
        }
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    /// Max-pooled ReLU features, before dropout.
    pub pooled: Vec<f64>,
    /// Winning window per filter and whether its pre-activation was positive.
    pub argmax: Vec<(usize, bool)>,
    /// Pooled features after the dropout mask.
    pub hidden: Vec<f64>,
    pub logits: [f64; N_CLASSES],
    pub probs: [f64; N_CLASSES],
}

impl Activations {
    pub fn prediction(&self) -> Prediction {
        Prediction::from_probs(self.probs)
    }
}

/// Window start `t` is valid when one of the positions `t..t+window` holds
/// a non-padding token. Positions past the end count as padding.
pub fn valid_windows(seq: &Sequence, window: usize) -> Vec<usize> {
    let ids = &seq.ids;
    let mut next_real = vec![usize::MAX; ids.len() + 1];
    for p in (0..ids.len()).rev() {
        next_real[p] = if ids[p] != 0 { p } else { next_real[p + 1] };
    }
    (0..ids.len())
        .filter(|&t| next_real[t] != usize::MAX && next_real[t] < t + window)
        .collect()
}

fn softmax(logits: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; N_CLASSES];
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs the network. `mask` holds per-filter dropout multipliers, already
/// scaled by 1/(1−p); `None` is inference mode.
pub fn forward(model: &ModelParams, cache: &VectorCache<'_>, seq: &Sequence, mask: Option<&[f64]>) -> Result<Activations> {
    let shape = model.shape;
    if cache.dim() != shape.dim {
        return Err(Error::config(format!(
            "embedding dimension {} does not match model dimension {}",
            cache.dim(),
            shape.dim
        )));
    }
    let windows = valid_windows(seq, shape.window);
    if windows.is_empty() {
        return Err(Error::input("token sequence holds only padding"));
    }
    if let Some(m) = mask {
        if m.len() != shape.filters {
            return Err(Error::input(format!("dropout mask has {} entries, expected {}", m.len(), shape.filters)));
        }
    }
    let flen = shape.filter_len();
    let mut pooled = vec![0.0; shape.filters];
    let mut argmax = vec![(0, false); shape.filters];
    let mut best = vec![f64::NEG_INFINITY; shape.filters];
    for &t in &windows {
        for k in 0..shape.filters {
            let w = &model.conv_w[k * flen..(k + 1) * flen];
            let mut z = model.conv_b[k];
            for o in 0..shape.window {
                let p = t + o;
                if p >= seq.ids.len() || seq.ids[p] == 0 {
                    continue;
                }
                z += dot(&w[o * shape.dim..(o + 1) * shape.dim], cache.row(seq.ids[p]));
            }
            if z > best[k] {
                best[k] = z;
                argmax[k] = (t, z > 0.0);
            }
        }
    }
    for k in 0..shape.filters {
        pooled[k] = best[k].max(0.0);
    }
    let hidden: Vec<f64> = match mask {
        Some(m) => pooled.iter().zip(m).map(|(f, m)| f * m).collect(),
        None => pooled.clone(),
    };
    let mut logits = [0.0; N_CLASSES];
    for (c, l) in logits.iter_mut().enumerate() {
        *l = model.out_b[c] + dot(&model.out_w[c * shape.filters..(c + 1) * shape.filters], &hidden);
    }
    let probs = softmax(&logits);
    Ok(Activations {
        pooled,
        argmax,
        hidden,
        logits,
        probs,
    })
}

pub fn predict(model: &ModelParams, cache: &VectorCache<'_>, seq: &Sequence) -> Result<Prediction> {
    forward(model, cache, seq, None).map(|a| a.prediction())
}

/// Encodes and classifies a single token list.
pub fn predict_tokens(model: &ModelParams, table: &EmbeddingTable, tokens: &[String]) -> Result<Prediction> {
    let mut cache = VectorCache::new(table);
    let seq = cache.encode(tokens)?;
    predict(model, &cache, &seq)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub seq: Sequence,
    pub class: usize,
}

impl Example {
    pub fn new(seq: Sequence, label: Label) -> Result<Self> {
        Ok(Example {
            seq,
            class: class_index(label)?,
        })
    }
}

/// Adds `scale` times the example's gradient into `grads`; returns its loss.
fn accumulate(
    model: &ModelParams,
    cache: &VectorCache<'_>,
    ex: &Example,
    mask: Option<&[f64]>,
    scale: f64,
    grads: &mut ModelParams,
) -> Result<f64> {
    let shape = model.shape;
    let act = forward(model, cache, &ex.seq, mask)?;
    let mut dlogit = act.probs;
    dlogit[ex.class] -= 1.0;
    for d in dlogit.iter_mut() {
        *d *= scale;
    }
    let f = shape.filters;
    for c in 0..N_CLASSES {
        grads.out_b[c] += dlogit[c];
        for k in 0..f {
            grads.out_w[c * f + k] += dlogit[c] * act.hidden[k];
        }
    }
    let flen = shape.filter_len();
    for k in 0..f {
        let (t, active) = act.argmax[k];
        if !active {
            continue;
        }
        let mut dh = 0.0;
        for c in 0..N_CLASSES {
            dh += model.out_w[c * f + k] * dlogit[c];
        }
        let dz = dh * mask.map_or(1.0, |m| m[k]);
        if dz == 0.0 {
            continue;
        }
        grads.conv_b[k] += dz;
        let gw = &mut grads.conv_w[k * flen..(k + 1) * flen];
        for o in 0..shape.window {
            let p = t + o;
            if p >= ex.seq.ids.len() || ex.seq.ids[p] == 0 {
                continue;
            }
            let x = cache.row(ex.seq.ids[p]);
            for (g, xi) in gw[o * shape.dim..(o + 1) * shape.dim].iter_mut().zip(x) {
                *g += dz * xi;
            }
        }
    }
    Ok(-act.probs[ex.class].max(f64::MIN_POSITIVE).ln() * scale)
}

/// Mean cross-entropy over the batch and its gradient. `masks`, when given,
/// holds one dropout mask per example.
pub fn loss_and_gradients(
    model: &ModelParams,
    cache: &VectorCache<'_>,
    batch: &[Example],
    masks: Option<&[Vec<f64>]>,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    if let Some(m) = masks {
        if m.len() != batch.len() {
            return Err(Error::input("one dropout mask per example is required"));
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let partials: Vec<Result<(f64, ModelParams)>> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut g = ModelParams::zeros(model.shape);
            let mut loss = 0.0;
            for (i, ex) in chunk.iter().enumerate() {
                let mask = masks.map(|m| m[ci * CHUNK + i].as_slice());
                loss += accumulate(model, cache, ex, mask, scale, &mut g)?;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = ModelParams::zeros(model.shape);
    for p in partials {
        let (l, g) = p?;
        total += l;
        grads.add_assign(&g);
    }
    Ok((total, grads))
}

/// Maximum relative error between analytic gradients and central
/// differences with step `eps`, over every parameter.
pub fn gradient_check(
    model: &ModelParams,
    cache: &VectorCache<'_>,
    batch: &[Example],
    masks: Option<&[Vec<f64>]>,
    eps: f64,
) -> Result<f64> {
    let (_, analytic) = loss_and_gradients(model, cache, batch, masks)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for b in 0..BLOCK_NAMES.len() {
        for i in 0..analytic.blocks()[b].1.len() {
            let orig = probe.blocks()[b].1[i];
            probe.blocks_mut()[b].1[i] = orig + eps;
            let (lp, _) = loss_and_gradients(&probe, cache, batch, masks)?;
            probe.blocks_mut()[b].1[i] = orig - eps;
            let (lm, _) = loss_and_gradients(&probe, cache, batch, masks)?;
            probe.blocks_mut()[b].1[i] = orig;
            let numeric = (lp - lm) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.blocks()[b].1[i], numeric));
        }
    }
    Ok(worst)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
