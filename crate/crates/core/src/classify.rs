//! The four eligibility classifiers: an averaged-embedding linear model,
//! a three-block 1D CNN over frozen pre-trained embeddings, a soft-margin
//! RBF SVM solved by sequential minimal optimization, and an exact-scan
//! k-nearest-neighbors model. All share one prediction interface and one
//! self-describing model-file format (magic, JSON header, raw matrices).

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{CnnConfig, KnnConfig, LinearConfig, SvmConfig};
use crate::embed::EmbeddingModel;
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::textprep::{Dataset, Label};

/// Class index convention everywhere in this module: 0 = NotEligible,
/// 1 = Eligible.
fn class_of(label: Label) -> usize {
    match label {
        Label::NotEligible => 0,
        Label::Eligible => 1,
    }
}

fn label_of(class: usize) -> Label {
    if class == 1 {
        Label::Eligible
    } else {
        Label::NotEligible
    }
}

/// Hard label plus per-class scores. `scores[0]` is the NotEligible
/// score, `scores[1]` the Eligible score; for the probabilistic models
/// they form a distribution. `low_confidence` marks statements whose
/// tokens were entirely out of vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub scores: [f64; 2],
    pub low_confidence: bool,
}

impl Prediction {
    fn from_scores(scores: [f64; 2], low_confidence: bool) -> Prediction {
        let label = if scores[1] >= scores[0] {
            Label::Eligible
        } else {
            Label::NotEligible
        };
        Prediction {
            label,
            scores,
            low_confidence,
        }
    }
}

fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    [e0 / (e0 + e1), e1 / (e0 + e1)]
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Frequency-ordered word list of a dataset (count desc, then word), cut
/// at `min_count` and optionally capped.
fn frequency_vocab(dataset: &Dataset, min_count: u64, cap: Option<usize>) -> Vec<String> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in &dataset.statements {
        for tok in s.text.split_whitespace() {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let mut pairs: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if let Some(cap) = cap {
        pairs.truncate(cap);
    }
    pairs.into_iter().map(|(w, _)| w.to_string()).collect()
}

// ---------------------------------------------------------------------------
// Linear averaged-embedding classifier
// ---------------------------------------------------------------------------

/// Softmax regression on the mean of (trainable) word embeddings — the
/// global-average-pooling "bag of tricks" classifier.
#[derive(Debug, Clone)]
pub struct LinearAvgModel {
    pub dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    /// V×dim, trainable
    embed: Vec<f64>,
    /// dim×2
    w: Vec<f64>,
    b: [f64; 2],
}

impl LinearAvgModel {
    fn mean_vector(&self, text: &str) -> (Vec<f64>, Vec<usize>) {
        let idxs: Vec<usize> = text
            .split_whitespace()
            .filter_map(|t| self.index.get(t).copied())
            .collect();
        let mut h = vec![0.0; self.dim];
        for &i in &idxs {
            for j in 0..self.dim {
                h[j] += self.embed[i * self.dim + j];
            }
        }
        if !idxs.is_empty() {
            for x in &mut h {
                *x /= idxs.len() as f64;
            }
        }
        (h, idxs)
    }

    fn forward(&self, h: &[f64]) -> [f64; 2] {
        let mut z = self.b;
        for j in 0..self.dim {
            z[0] += h[j] * self.w[j * 2];
            z[1] += h[j] * self.w[j * 2 + 1];
        }
        softmax2(z)
    }

    pub fn predict(&self, text: &str) -> Prediction {
        let (h, idxs) = self.mean_vector(text);
        Prediction::from_scores(self.forward(&h), idxs.is_empty())
    }
}

/// Trains the linear model by SGD on softmax cross-entropy, learning rate
/// decaying linearly to zero over all updates. With `pretrained` vectors,
/// the embedding rows of shared words start from them.
pub fn train_linear_avg(
    dataset: &Dataset,
    pretrained: Option<&EmbeddingModel>,
    cfg: &LinearConfig,
    dim: usize,
    seed: u64,
) -> Result<LinearAvgModel> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot train a classifier on an empty dataset".into()));
    }
    let dim = pretrained.map_or(dim, |m| m.dim);
    let words = frequency_vocab(dataset, cfg.min_count, None);
    let index: HashMap<String, usize> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();

    let mut rng = rng_for(seed, "classify.linear");
    let mut embed = vec![0.0; words.len() * dim];
    for (i, word) in words.iter().enumerate() {
        let from_pretrained = cfg.pretrained.then(|| pretrained).flatten().and_then(|m| {
            let (v, oov) = m.vector(word);
            (!oov).then_some(v)
        });
        match from_pretrained {
            Some(v) => embed[i * dim..(i + 1) * dim].copy_from_slice(&v),
            None => {
                for j in 0..dim {
                    embed[i * dim + j] = (rng.gen::<f64>() - 0.5) / dim as f64;
                }
            }
        }
    }

    let mut model = LinearAvgModel {
        dim,
        words,
        index,
        embed,
        w: vec![0.0; dim * 2],
        b: [0.0; 2],
    };

    let n = dataset.len();
    let total_updates = (cfg.epochs * n).max(1) as f64;
    let mut done = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let s = &dataset.statements[i];
            let lr = cfg.learning_rate * (1.0 - done as f64 / total_updates);
            done += 1;
            let (h, idxs) = model.mean_vector(&s.text);
            let p = model.forward(&h);
            let mut dz = p;
            dz[class_of(s.label)] -= 1.0;

            // gradients: dW = h ⊗ dz, db = dz, dh = W·dz
            let mut dh = vec![0.0; model.dim];
            for j in 0..model.dim {
                dh[j] = model.w[j * 2] * dz[0] + model.w[j * 2 + 1] * dz[1];
                model.w[j * 2] -= lr * h[j] * dz[0];
                model.w[j * 2 + 1] -= lr * h[j] * dz[1];
            }
            model.b[0] -= lr * dz[0];
            model.b[1] -= lr * dz[1];
            if !idxs.is_empty() {
                let scale = lr / idxs.len() as f64;
                for &wi in &idxs {
                    for j in 0..model.dim {
                        model.embed[wi * model.dim + j] -= scale * dh[j];
                    }
                }
            }
        }
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// 1D CNN
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Conv {
    k: usize,
    cin: usize,
    cout: usize,
    /// k×cin×cout
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Dense {
    fin: usize,
    fout: usize,
    /// fin×fout
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Convolutional classifier over index-encoded statements: per pool entry
/// one conv(kernel, ReLU) + max-pool(width, stride = width) block, then a
/// ReLU dense layer and a 2-way softmax. The embedding matrix is frozen;
/// row 0 is the shared padding/out-of-vocabulary zero row.
#[derive(Debug, Clone)]
pub struct CnnModel {
    pub seq_len: usize,
    pub dim: usize,
    kernel: usize,
    pools: Vec<usize>,
    filters: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    /// (words+1)×dim, frozen; row 0 zero
    embed: Vec<f64>,
    convs: Vec<Conv>,
    dense1: Dense,
    dense2: Dense,
}

/// Where the CNN's frozen embedding rows come from.
pub enum EmbedSource<'a> {
    Pretrained(&'a EmbeddingModel),
    Random { dim: usize },
}

/// Per-block sequence lengths after conv and pool, given the input
/// length. Errors when any stage collapses below one position.
fn layer_lengths(seq_len: usize, kernel: usize, pools: &[usize]) -> Result<Vec<usize>> {
    let mut lens = Vec::with_capacity(pools.len() * 2);
    let mut l = seq_len;
    for &p in pools {
        if l < kernel {
            return Err(Error::Config(format!(
                "sequence length {seq_len} is below the network's receptive field \
                 (length {l} reaches a width-{kernel} convolution)"
            )));
        }
        l = l - kernel + 1;
        lens.push(l);
        if l < p {
            return Err(Error::Config(format!(
                "sequence length {seq_len} is below the network's receptive field \
                 (length {l} reaches a width-{p} pool)"
            )));
        }
        l /= p;
        lens.push(l);
    }
    Ok(lens)
}

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * limit).collect()
}

/// Activations of one forward pass, kept for backprop.
struct CnnTrace {
    /// per block: pre-activation conv output (len×cout)
    conv_z: Vec<Vec<f64>>,
    /// per block: pooled output (len×cout)
    pooled: Vec<Vec<f64>>,
    /// per block: argmax source index per pooled cell
    argmax: Vec<Vec<usize>>,
    dense1_z: Vec<f64>,
    dense1_a: Vec<f64>,
    probs: [f64; 2],
}

impl CnnModel {
    /// Builds an untrained network. Exposed for tests and for the trainer.
    pub fn new(
        dataset: &Dataset,
        source: &EmbedSource,
        cfg: &CnnConfig,
        seed: u64,
    ) -> Result<CnnModel> {
        if dataset.is_empty() {
            return Err(Error::Data("cannot train a classifier on an empty dataset".into()));
        }
        layer_lengths(cfg.seq_len, cfg.kernel, &cfg.pools)?;
        let dim = match source {
            EmbedSource::Pretrained(m) => m.dim,
            EmbedSource::Random { dim } => *dim,
        };
        // row 0 is reserved for padding/OOV
        let words = frequency_vocab(dataset, 1, Some(cfg.vocab_size));
        let index: HashMap<String, usize> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i + 1))
            .collect();
        let mut rng = rng_for(seed, "classify.cnn.init");
        let mut embed = vec![0.0; (words.len() + 1) * dim];
        for (i, word) in words.iter().enumerate() {
            let row = &mut embed[(i + 1) * dim..(i + 2) * dim];
            match source {
                EmbedSource::Pretrained(m) => row.copy_from_slice(&m.vector(word).0),
                EmbedSource::Random { .. } => {
                    for x in row.iter_mut() {
                        *x = (rng.gen::<f64>() - 0.5) / dim as f64;
                    }
                }
            }
        }

        let mut convs = Vec::with_capacity(cfg.pools.len());
        let mut cin = dim;
        for _ in &cfg.pools {
            let w = glorot(
                &mut rng,
                cfg.kernel * cin,
                cfg.kernel * cfg.filters,
                cfg.kernel * cin * cfg.filters,
            );
            convs.push(Conv {
                k: cfg.kernel,
                cin,
                cout: cfg.filters,
                w,
                b: vec![0.0; cfg.filters],
            });
            cin = cfg.filters;
        }
        let lens = layer_lengths(cfg.seq_len, cfg.kernel, &cfg.pools)?;
        let flat = lens.last().unwrap() * cfg.filters;
        let dense1 = Dense {
            fin: flat,
            fout: cfg.dense,
            w: glorot(&mut rng, flat, cfg.dense, flat * cfg.dense),
            b: vec![0.0; cfg.dense],
        };
        let dense2 = Dense {
            fin: cfg.dense,
            fout: 2,
            w: glorot(&mut rng, cfg.dense, 2, cfg.dense * 2),
            b: vec![0.0; 2],
        };
        Ok(CnnModel {
            seq_len: cfg.seq_len,
            dim,
            kernel: cfg.kernel,
            pools: cfg.pools.clone(),
            filters: cfg.filters,
            words,
            index,
            embed,
            convs,
            dense1,
            dense2,
        })
    }

    /// Position lengths after each conv and pool stage.
    pub fn shape_chain(&self) -> Vec<usize> {
        layer_lengths(self.seq_len, self.kernel, &self.pools).expect("validated at construction")
    }

    /// Index-encodes a statement: first `seq_len` tokens, right-padded
    /// with the zero index; unknown words share index 0.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut out: Vec<usize> = text
            .split_whitespace()
            .take(self.seq_len)
            .map(|t| self.index.get(t).copied().unwrap_or(0))
            .collect();
        out.resize(self.seq_len, 0);
        out
    }

    fn forward(&self, encoded: &[usize]) -> CnnTrace {
        let mut x: Vec<f64> = Vec::with_capacity(self.seq_len * self.dim);
        for &idx in encoded {
            x.extend_from_slice(&self.embed[idx * self.dim..(idx + 1) * self.dim]);
        }
        let mut len = self.seq_len;
        let mut cin = self.dim;
        let mut conv_z = Vec::with_capacity(self.convs.len());
        let mut pooled = Vec::with_capacity(self.convs.len());
        let mut argmax = Vec::with_capacity(self.convs.len());
        for (conv, &p) in self.convs.iter().zip(&self.pools) {
            let out_len = len - conv.k + 1;
            let mut z = vec![0.0; out_len * conv.cout];
            for t in 0..out_len {
                for o in 0..conv.cout {
                    let mut acc = conv.b[o];
                    for dt in 0..conv.k {
                        let row = &x[(t + dt) * cin..(t + dt + 1) * cin];
                        let wrow = &conv.w[(dt * cin) * conv.cout..];
                        for (i, &xi) in row.iter().enumerate() {
                            acc += xi * wrow[i * conv.cout + o];
                        }
                    }
                    z[t * conv.cout + o] = acc;
                }
            }
            let pooled_len = out_len / p;
            let mut pz = vec![0.0; pooled_len * conv.cout];
            let mut am = vec![0usize; pooled_len * conv.cout];
            for t in 0..pooled_len {
                for o in 0..conv.cout {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = t * p;
                    for dt in 0..p {
                        let a = z[(t * p + dt) * conv.cout + o].max(0.0);
                        if a > best {
                            best = a;
                            best_at = t * p + dt;
                        }
                    }
                    pz[t * conv.cout + o] = best;
                    am[t * conv.cout + o] = best_at;
                }
            }
            conv_z.push(z);
            argmax.push(am);
            x = pz.clone();
            pooled.push(pz);
            len = pooled_len;
            cin = conv.cout;
        }

        let f = &x;
        let mut z1 = self.dense1.b.clone();
        for (i, &fi) in f.iter().enumerate() {
            for j in 0..self.dense1.fout {
                z1[j] += fi * self.dense1.w[i * self.dense1.fout + j];
            }
        }
        let a1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
        let mut z2 = [self.dense2.b[0], self.dense2.b[1]];
        for (i, &ai) in a1.iter().enumerate() {
            z2[0] += ai * self.dense2.w[i * 2];
            z2[1] += ai * self.dense2.w[i * 2 + 1];
        }
        CnnTrace {
            conv_z,
            pooled,
            argmax,
            dense1_z: z1,
            dense1_a: a1,
            probs: softmax2(z2),
        }
    }

    pub fn predict(&self, text: &str) -> Prediction {
        let encoded = self.encode(text);
        let low_confidence = encoded.iter().all(|&i| i == 0);
        let trace = self.forward(&encoded);
        Prediction::from_scores(trace.probs, low_confidence)
    }

    /// Maximum relative disagreement between the analytic gradients and
    /// central finite differences on one (statement, class) sample,
    /// swept over every parameter tensor. Verification hook.
    ///
    /// The biases are first moved to small fixed nonzero values: at
    /// exactly zero, padded positions put the ReLU pre-activations right
    /// on the kink, where a two-sided difference quotient measures a
    /// slope the subgradient convention does not claim. For the same
    /// reason the statement should fill the whole sequence with in-vocab
    /// tokens.
    pub fn gradient_check(&mut self, text: &str, class: usize) -> f64 {
        for (bi, conv) in self.convs.iter_mut().enumerate() {
            for (i, b) in conv.b.iter_mut().enumerate() {
                *b = 0.013 * ((i + bi) as f64 - 1.5);
            }
        }
        for (i, b) in self.dense1.b.iter_mut().enumerate() {
            *b = 0.017 * (i as f64 - 3.0);
        }
        let encoded = self.encode(text);
        let mut grads = CnnGrads::zeros_like(self);
        cnn_backward(self, &encoded, class, &mut grads);

        let eps = 1e-6;
        let mut max_rel: f64 = 0.0;
        for t in 0..self.tensor_count() {
            for idx in 0..self.tensor_mut(t).len() {
                let orig = self.tensor_mut(t)[idx];
                self.tensor_mut(t)[idx] = orig + eps;
                let lp = -self.forward(&encoded).probs[class].max(1e-300).ln();
                self.tensor_mut(t)[idx] = orig - eps;
                let lm = -self.forward(&encoded).probs[class].max(1e-300).ln();
                self.tensor_mut(t)[idx] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                let analytic = grads.tensor(t)[idx];
                let denom = fd.abs().max(analytic.abs());
                if denom > 1e-8 {
                    max_rel = max_rel.max((fd - analytic).abs() / denom);
                }
            }
        }
        max_rel
    }

    fn tensor_count(&self) -> usize {
        self.convs.len() * 2 + 4
    }

    /// Parameter tensors in a fixed order (conv weights/biases per
    /// block, then the dense layers) for the finite-difference sweep.
    fn tensor_mut(&mut self, t: usize) -> &mut Vec<f64> {
        let nc = self.convs.len();
        if t < nc * 2 {
            let c = &mut self.convs[t / 2];
            if t % 2 == 0 {
                &mut c.w
            } else {
                &mut c.b
            }
        } else {
            match t - nc * 2 {
                0 => &mut self.dense1.w,
                1 => &mut self.dense1.b,
                2 => &mut self.dense2.w,
                _ => &mut self.dense2.b,
            }
        }
    }
}

/// Flat parameter gradients, laid out like the model parameters.
struct CnnGrads {
    convs: Vec<(Vec<f64>, Vec<f64>)>,
    dense1: (Vec<f64>, Vec<f64>),
    dense2: (Vec<f64>, Vec<f64>),
}

impl CnnGrads {
    /// Same tensor order as [`CnnModel::tensor_mut`].
    fn tensor(&self, t: usize) -> &Vec<f64> {
        let nc = self.convs.len();
        if t < nc * 2 {
            let c = &self.convs[t / 2];
            if t % 2 == 0 {
                &c.0
            } else {
                &c.1
            }
        } else {
            match t - nc * 2 {
                0 => &self.dense1.0,
                1 => &self.dense1.1,
                2 => &self.dense2.0,
                _ => &self.dense2.1,
            }
        }
    }

    fn zeros_like(model: &CnnModel) -> CnnGrads {
        CnnGrads {
            convs: model
                .convs
                .iter()
                .map(|c| (vec![0.0; c.w.len()], vec![0.0; c.b.len()]))
                .collect(),
            dense1: (vec![0.0; model.dense1.w.len()], vec![0.0; model.dense1.b.len()]),
            dense2: (vec![0.0; model.dense2.w.len()], vec![0.0; model.dense2.b.len()]),
        }
    }

    fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.convs {
            w.iter_mut().for_each(|x| *x *= s);
            b.iter_mut().for_each(|x| *x *= s);
        }
        for g in [&mut self.dense1, &mut self.dense2] {
            g.0.iter_mut().for_each(|x| *x *= s);
            g.1.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Accumulates the loss gradient of one sample into `grads`. Returns the
/// cross-entropy loss.
fn cnn_backward(model: &CnnModel, encoded: &[usize], class: usize, grads: &mut CnnGrads) -> f64 {
    let trace = model.forward(encoded);
    let loss = -trace.probs[class].max(1e-12).ln();

    let mut dz2 = trace.probs;
    dz2[class] -= 1.0;
    let a1 = &trace.dense1_a;
    for i in 0..model.dense2.fin {
        grads.dense2.0[i * 2] += a1[i] * dz2[0];
        grads.dense2.0[i * 2 + 1] += a1[i] * dz2[1];
    }
    grads.dense2.1[0] += dz2[0];
    grads.dense2.1[1] += dz2[1];

    let mut dz1 = vec![0.0; model.dense1.fout];
    for j in 0..model.dense1.fout {
        if trace.dense1_z[j] > 0.0 {
            dz1[j] = model.dense2.w[j * 2] * dz2[0] + model.dense2.w[j * 2 + 1] * dz2[1];
        }
    }
    // flattened input of dense1 is the last pooled map
    let f = trace.pooled.last().unwrap();
    let mut df = vec![0.0; f.len()];
    for (i, &fi) in f.iter().enumerate() {
        for j in 0..model.dense1.fout {
            grads.dense1.0[i * model.dense1.fout + j] += fi * dz1[j];
            df[i] += model.dense1.w[i * model.dense1.fout + j] * dz1[j];
        }
    }
    for j in 0..model.dense1.fout {
        grads.dense1.1[j] += dz1[j];
    }

    // walk the conv blocks backwards
    let mut d_pooled = df;
    for bi in (0..model.convs.len()).rev() {
        let conv = &model.convs[bi];
        let z = &trace.conv_z[bi];
        let am = &trace.argmax[bi];
        // route pooled gradient through argmax, gate by ReLU
        let mut dz = vec![0.0; z.len()];
        for (cell, &dp) in d_pooled.iter().enumerate() {
            let o = cell % conv.cout;
            let src = am[cell];
            if z[src * conv.cout + o] > 0.0 {
                dz[src * conv.cout + o] += dp;
            }
        }
        // input of this block
        let input: Vec<f64> = if bi == 0 {
            encoded
                .iter()
                .flat_map(|&idx| model.embed[idx * model.dim..(idx + 1) * model.dim].to_vec())
                .collect()
        } else {
            trace.pooled[bi - 1].clone()
        };
        let out_len = z.len() / conv.cout;
        let mut d_input = vec![0.0; input.len()];
        let (gw, gb) = &mut grads.convs[bi];
        for t in 0..out_len {
            for o in 0..conv.cout {
                let g = dz[t * conv.cout + o];
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                for dt in 0..conv.k {
                    for i in 0..conv.cin {
                        let xi = input[(t + dt) * conv.cin + i];
                        gw[(dt * conv.cin + i) * conv.cout + o] += g * xi;
                        d_input[(t + dt) * conv.cin + i] +=
                            g * conv.w[(dt * conv.cin + i) * conv.cout + o];
                    }
                }
            }
        }
        d_pooled = d_input; // becomes the pooled gradient of the previous block
    }
    loss
}

/// RMSProp state for one tensor.
#[derive(Debug, Clone)]
struct RmsCache(Vec<f64>);

impl RmsCache {
    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, rho: f64, eps: f64) {
        for ((p, &g), c) in params.iter_mut().zip(grads).zip(&mut self.0) {
            *c = rho * *c + (1.0 - rho) * g * g;
            *p -= lr * g / (c.sqrt() + eps);
        }
    }
}

/// Applies one RMSProp step on all parameters from averaged batch
/// gradients. Exposed within the crate for the optimizer sanity tests.
struct CnnOptimizer {
    convs: Vec<(RmsCache, RmsCache)>,
    dense1: (RmsCache, RmsCache),
    dense2: (RmsCache, RmsCache),
    rho: f64,
    eps: f64,
    decay: f64,
    lr0: f64,
    steps: u64,
}

impl CnnOptimizer {
    fn new(model: &CnnModel, cfg: &CnnConfig) -> CnnOptimizer {
        CnnOptimizer {
            convs: model
                .convs
                .iter()
                .map(|c| (RmsCache(vec![0.0; c.w.len()]), RmsCache(vec![0.0; c.b.len()])))
                .collect(),
            dense1: (
                RmsCache(vec![0.0; model.dense1.w.len()]),
                RmsCache(vec![0.0; model.dense1.b.len()]),
            ),
            dense2: (
                RmsCache(vec![0.0; model.dense2.w.len()]),
                RmsCache(vec![0.0; model.dense2.b.len()]),
            ),
            rho: cfg.rho,
            eps: cfg.epsilon,
            decay: cfg.decay,
            lr0: cfg.learning_rate,
            steps: 0,
        }
    }

    fn step(&mut self, model: &mut CnnModel, grads: &CnnGrads) {
        self.steps += 1;
        let lr = self.lr0 / (1.0 + self.decay * self.steps as f64);
        for ((conv, cache), (gw, gb)) in model
            .convs
            .iter_mut()
            .zip(&mut self.convs)
            .zip(&grads.convs)
        {
            cache.0.step(&mut conv.w, gw, lr, self.rho, self.eps);
            cache.1.step(&mut conv.b, gb, lr, self.rho, self.eps);
        }
        self.dense1
            .0
            .step(&mut model.dense1.w, &grads.dense1.0, lr, self.rho, self.eps);
        self.dense1
            .1
            .step(&mut model.dense1.b, &grads.dense1.1, lr, self.rho, self.eps);
        self.dense2
            .0
            .step(&mut model.dense2.w, &grads.dense2.0, lr, self.rho, self.eps);
        self.dense2
            .1
            .step(&mut model.dense2.b, &grads.dense2.1, lr, self.rho, self.eps);
    }
}

/// Trains the CNN: mini-batch RMSProp on cross-entropy, data reshuffled
/// with the seed before each epoch, embedding matrix left untouched.
/// Returns the model and the mean loss per epoch.
pub fn train_cnn(
    dataset: &Dataset,
    source: &EmbedSource,
    cfg: &CnnConfig,
    seed: u64,
) -> Result<(CnnModel, Vec<f64>)> {
    let mut model = CnnModel::new(dataset, source, cfg, seed)?;
    let encoded: Vec<(Vec<usize>, usize)> = dataset
        .statements
        .iter()
        .map(|s| (model.encode(&s.text), class_of(s.label)))
        .collect();
    let mut optimizer = CnnOptimizer::new(&model, cfg);
    let mut rng = rng_for(seed, "classify.cnn.shuffle");
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            let mut grads = CnnGrads::zeros_like(&model);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (enc, class) = &encoded[i];
                batch_loss += cnn_backward(&model, enc, *class, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            optimizer.step(&mut model, &grads);
            epoch_loss += batch_loss;
        }
        epoch_losses.push(epoch_loss / encoded.len() as f64);
    }
    Ok((model, epoch_losses))
}

// ---------------------------------------------------------------------------
// RBF-SVM via SMO
// ---------------------------------------------------------------------------

/// Soft-margin RBF support vector machine. Stores only the support
/// vectors with their signed dual coefficients.
#[derive(Debug, Clone)]
pub struct SvmModel {
    pub gamma: f64,
    pub c: f64,
    pub bias: f64,
    /// support vectors, row-major n_sv×dim
    sv: Vec<f64>,
    /// y_i·α_i per support vector
    coef: Vec<f64>,
    pub dim: usize,
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl SvmModel {
    /// Signed distance-like decision value; positive means Eligible.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let n = self.coef.len();
        let mut acc = self.bias;
        for i in 0..n {
            acc += self.coef[i] * rbf(&self.sv[i * self.dim..(i + 1) * self.dim], x, self.gamma);
        }
        acc
    }

    pub fn n_support(&self) -> usize {
        self.coef.len()
    }

    /// Support vectors with their signed dual coefficients `y_i·α_i`,
    /// for inspection and KKT verification.
    pub fn support_iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.sv.chunks(self.dim).zip(self.coef.iter().copied())
    }

    pub fn predict_vec(&self, x: &[f64], low_confidence: bool) -> Prediction {
        let margin = self.decision(x);
        let p = sigmoid(margin);
        Prediction {
            label: label_of(usize::from(margin > 0.0)),
            scores: [1.0 - p, p],
            low_confidence,
        }
    }
}

/// Kernel rows with FIFO-ish eviction; enough for the desk-scale solver.
struct KernelCache<'a> {
    x: &'a [Vec<f64>],
    gamma: f64,
    rows: HashMap<usize, Vec<f64>>,
    order: std::collections::VecDeque<usize>,
    cap: usize,
    pub evals: u64,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a [Vec<f64>], gamma: f64, cap: usize) -> Self {
        KernelCache {
            x,
            gamma,
            rows: HashMap::new(),
            order: std::collections::VecDeque::new(),
            cap: cap.max(2),
            evals: 0,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if !self.rows.contains_key(&i) {
            let xi = &self.x[i];
            let row: Vec<f64> = self.x.iter().map(|xj| rbf(xi, xj, self.gamma)).collect();
            self.evals += self.x.len() as u64;
            if self.rows.len() >= self.cap {
                if let Some(old) = self.order.pop_front() {
                    self.rows.remove(&old);
                }
            }
            self.rows.insert(i, row);
            self.order.push_back(i);
        }
        &self.rows[&i]
    }
}

/// Trains the SVM with sequential minimal optimization using
/// maximal-violating-pair selection, a periodic shrinking pass, and a
/// final unshrink verification so the returned solution satisfies the
/// KKT conditions within tolerance on the full set.
pub fn train_svm(vectors: &[(Vec<f64>, Label)], cfg: &SvmConfig) -> Result<SvmModel> {
    let n = vectors.len();
    if n > cfg.budget {
        return Err(Error::Budget(format!(
            "SMO training set of {n} points exceeds the budget of {}; \
             subsample the dataset or raise [svm] budget",
            cfg.budget
        )));
    }
    if n == 0 {
        return Err(Error::Data("cannot train a classifier on an empty dataset".into()));
    }
    let dim = vectors[0].0.len();
    if vectors.iter().any(|(v, _)| v.len() != dim) {
        return Err(Error::Data("inconsistent vector dimensions".into()));
    }
    let y: Vec<f64> = vectors
        .iter()
        .map(|(_, l)| if *l == Label::Eligible { 1.0 } else { -1.0 })
        .collect();
    if y.iter().all(|&v| v > 0.0) || y.iter().all(|&v| v < 0.0) {
        return Err(Error::Data("SVM training requires both classes".into()));
    }
    let x: Vec<Vec<f64>> = vectors.iter().map(|(v, _)| v.clone()).collect();
    let mut cache = KernelCache::new(&x, cfg.gamma, cfg.cache_rows);

    let c = cfg.c;
    let tol = cfg.tolerance;
    let mut alpha = vec![0.0f64; n];
    // gradient of the dual objective: G_i = Σ_j α_j y_i y_j K_ij − 1
    let mut grad = vec![-1.0f64; n];
    let mut active: Vec<usize> = (0..n).collect();
    let max_iter = 100_000.max(n * 100);
    let shrink_every = 1000.min(n.max(64));
    let mut unshrunk_final = false;

    let mut iter = 0usize;
    loop {
        // maximal violating pair over the active set
        let mut m_val = f64::NEG_INFINITY;
        let mut m_idx = usize::MAX;
        let mut big_m_val = f64::INFINITY;
        let mut big_m_idx = usize::MAX;
        for &t in &active {
            let yg = -y[t] * grad[t];
            let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if in_up && yg > m_val {
                m_val = yg;
                m_idx = t;
            }
            if in_low && yg < big_m_val {
                big_m_val = yg;
                big_m_idx = t;
            }
        }

        if m_idx == usize::MAX || big_m_idx == usize::MAX || m_val - big_m_val <= tol {
            if active.len() == n || unshrunk_final {
                break;
            }
            // unshrink: restore the full set, recompute the gradient of
            // previously inactive points, and verify global optimality
            let mut is_active = vec![false; n];
            for &a in &active {
                is_active[a] = true;
            }
            let inactive: Vec<usize> = (0..n).filter(|&i| !is_active[i]).collect();
            for &i in &inactive {
                let row = cache.row(i);
                let mut g = -1.0;
                for j in 0..n {
                    if alpha[j] > 0.0 {
                        g += alpha[j] * y[i] * y[j] * row[j];
                    }
                }
                grad[i] = g;
            }
            active = (0..n).collect();
            unshrunk_final = true;
            continue;
        }
        unshrunk_final = false;

        iter += 1;
        if iter > max_iter {
            return Err(Error::Data(format!(
                "SMO failed to converge within {max_iter} iterations"
            )));
        }

        let (i, j) = (m_idx, big_m_idx);
        let kii = cache.row(i)[i];
        let kjj = cache.row(j)[j];
        let kij = cache.row(i)[j];
        let quad = (kii + kjj - 2.0 * kij).max(1e-12);

        // two-variable sub-problem in the LIBSVM parametrization
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else {
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }

        let (di, dj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        if di == 0.0 && dj == 0.0 {
            continue;
        }
        let row_i = cache.row(i).to_vec();
        let row_j = cache.row(j).to_vec();
        for &t in &active {
            grad[t] += y[t] * (y[i] * di * row_i[t] + y[j] * dj * row_j[t]);
        }

        // periodic shrinking: park points pinned at a bound that are not
        // violating; the final unshrink pass re-checks them
        if iter % shrink_every == 0 && active.len() > 2 {
            let m_b = m_val;
            let big_m_b = big_m_val;
            active.retain(|&t| {
                let yg = -y[t] * grad[t];
                let upper_pinned = if y[t] > 0.0 { alpha[t] >= c } else { alpha[t] <= 0.0 };
                let lower_pinned = if y[t] > 0.0 { alpha[t] <= 0.0 } else { alpha[t] >= c };
                !(upper_pinned && yg > m_b || lower_pinned && yg < big_m_b)
            });
            if active.len() < 2 {
                active = (0..n).collect();
            }
        }
    }

    // bias from the final violating-pair bounds on the full set
    let mut m_val = f64::NEG_INFINITY;
    let mut big_m_val = f64::INFINITY;
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for t in 0..n {
        let yg = -y[t] * grad[t];
        let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
        let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
        if in_up {
            m_val = m_val.max(yg);
        }
        if in_low {
            big_m_val = big_m_val.min(yg);
        }
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            free_count += 1;
        }
    }
    let bias = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        (m_val + big_m_val) / 2.0
    };

    let mut sv = Vec::new();
    let mut coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            sv.extend_from_slice(&x[t]);
            coef.push(alpha[t] * y[t]);
        }
    }
    Ok(SvmModel {
        gamma: cfg.gamma,
        c,
        bias,
        sv,
        coef,
        dim,
    })
}

// ---------------------------------------------------------------------------
// kNN
// ---------------------------------------------------------------------------

/// Instance store with exact exhaustive-scan prediction: majority label
/// among the k nearest stored points by Euclidean distance, uniform
/// weights. Distance ties break toward the earlier stored point.
#[derive(Debug, Clone)]
pub struct KnnModel {
    pub k: usize,
    pub dim: usize,
    /// row-major n×dim
    points: Vec<f64>,
    labels: Vec<Label>,
}

/// Stores the training vectors; no fitting beyond storage.
pub fn train_knn(vectors: &[(Vec<f64>, Label)], cfg: &KnnConfig) -> Result<KnnModel> {
    if vectors.is_empty() {
        return Err(Error::Data("cannot train a classifier on an empty dataset".into()));
    }
    if cfg.k == 0 || cfg.k > vectors.len() {
        return Err(Error::Config(format!(
            "k = {} is outside 1..={} stored points",
            cfg.k,
            vectors.len()
        )));
    }
    let dim = vectors[0].0.len();
    if vectors.iter().any(|(v, _)| v.len() != dim) {
        return Err(Error::Data("inconsistent vector dimensions".into()));
    }
    let mut points = Vec::with_capacity(vectors.len() * dim);
    let mut labels = Vec::with_capacity(vectors.len());
    for (v, l) in vectors {
        points.extend_from_slice(v);
        labels.push(*l);
    }
    Ok(KnnModel {
        k: cfg.k,
        dim,
        points,
        labels,
    })
}

impl KnnModel {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn predict_vec(&self, x: &[f64], low_confidence: bool) -> Prediction {
        let mut dist: Vec<(f64, usize)> = (0..self.len())
            .map(|i| {
                let row = &self.points[i * self.dim..(i + 1) * self.dim];
                let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        dist.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.1.cmp(&b.1))
        });
        let votes_eligible = dist
            .iter()
            .take(self.k)
            .filter(|(_, i)| self.labels[*i] == Label::Eligible)
            .count();
        let frac = votes_eligible as f64 / self.k as f64;
        Prediction {
            label: label_of(usize::from(frac > 0.5)),
            scores: [1.0 - frac, frac],
            low_confidence,
        }
    }
}

// ---------------------------------------------------------------------------
// Unified interface and model files
// ---------------------------------------------------------------------------

/// Any trained classifier, as stored in a model file.
#[derive(Debug, Clone)]
pub enum ClassifierModel {
    Linear(LinearAvgModel),
    Cnn(CnnModel),
    Svm(SvmModel),
    Knn(KnnModel),
}

impl ClassifierModel {
    pub fn kind(&self) -> &'static str {
        match self {
            ClassifierModel::Linear(_) => "linear",
            ClassifierModel::Cnn(_) => "cnn",
            ClassifierModel::Svm(_) => "svm",
            ClassifierModel::Knn(_) => "knn",
        }
    }

    /// Predicts one normalized statement. The vector-space models (SVM,
    /// kNN) need the embedding model that produced their training
    /// vectors.
    pub fn predict(&self, text: &str, embedding: Option<&EmbeddingModel>) -> Result<Prediction> {
        match self {
            ClassifierModel::Linear(m) => Ok(m.predict(text)),
            ClassifierModel::Cnn(m) => Ok(m.predict(text)),
            ClassifierModel::Svm(_) | ClassifierModel::Knn(_) => {
                let emb = embedding.ok_or_else(|| {
                    Error::Config(format!(
                        "a {} model predicts on sentence vectors; pass the embedding model \
                         it was trained with",
                        self.kind()
                    ))
                })?;
                let (v, all_oov) = emb.sentence_vector(text)?;
                Ok(match self {
                    ClassifierModel::Svm(m) => m.predict_vec(&v, all_oov),
                    ClassifierModel::Knn(m) => m.predict_vec(&v, all_oov),
                    _ => unreachable!(),
                })
            }
        }
    }
}

/// Model files: this magic line, a one-line JSON header (kind, format
/// version, hyper-parameters and shapes, embedding digest), then the
/// parameter matrices as raw little-endian f64 in header order.
const MODEL_MAGIC: &[u8] = b"ELIGMDL1\n";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    kind: String,
    version: u32,
    /// digest of the embedding file the model was trained against, when
    /// one applies
    embedding_digest: Option<String>,
    meta: serde_json::Value,
    /// blob name → element count, in file order
    blobs: Vec<(String, usize)>,
}

#[derive(Serialize, Deserialize)]
struct LinearMeta {
    dim: usize,
    words: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CnnMeta {
    seq_len: usize,
    dim: usize,
    kernel: usize,
    pools: Vec<usize>,
    filters: usize,
    dense_width: usize,
    words: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SvmMeta {
    gamma: f64,
    c: f64,
    bias: f64,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct KnnMeta {
    k: usize,
    dim: usize,
    /// class index per stored point
    labels: Vec<u8>,
}

/// FNV-1a digest of a file's bytes; pairs vector-space models with the
/// embedding file they were trained against.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{hash:016x}"))
}

fn write_blob(w: &mut impl Write, data: &[f64], path: &Path) -> Result<()> {
    for &v in data {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn read_blob(r: &mut impl Read, len: usize, path: &Path) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_model(
    model: &ClassifierModel,
    embedding_digest: Option<String>,
    path: &Path,
) -> Result<()> {
    let to_meta = |v: serde_json::Result<serde_json::Value>| {
        v.map_err(|e| Error::Schema(format!("model header serialization failed: {e}")))
    };
    let (meta, blobs): (serde_json::Value, Vec<(String, &[f64])>) = match model {
        ClassifierModel::Linear(m) => (
            to_meta(serde_json::to_value(LinearMeta {
                dim: m.dim,
                words: m.words.clone(),
            }))?,
            vec![
                ("embed".into(), m.embed.as_slice()),
                ("w".into(), m.w.as_slice()),
                ("b".into(), m.b.as_slice()),
            ],
        ),
        ClassifierModel::Cnn(m) => {
            let mut blobs: Vec<(String, &[f64])> = vec![("embed".into(), m.embed.as_slice())];
            for (i, c) in m.convs.iter().enumerate() {
                blobs.push((format!("conv{i}.w"), c.w.as_slice()));
                blobs.push((format!("conv{i}.b"), c.b.as_slice()));
            }
            blobs.push(("dense1.w".into(), m.dense1.w.as_slice()));
            blobs.push(("dense1.b".into(), m.dense1.b.as_slice()));
            blobs.push(("dense2.w".into(), m.dense2.w.as_slice()));
            blobs.push(("dense2.b".into(), m.dense2.b.as_slice()));
            (
                to_meta(serde_json::to_value(CnnMeta {
                    seq_len: m.seq_len,
                    dim: m.dim,
                    kernel: m.kernel,
                    pools: m.pools.clone(),
                    filters: m.filters,
                    dense_width: m.dense1.fout,
                    words: m.words.clone(),
                }))?,
                blobs,
            )
        }
        ClassifierModel::Svm(m) => (
            to_meta(serde_json::to_value(SvmMeta {
                gamma: m.gamma,
                c: m.c,
                bias: m.bias,
                dim: m.dim,
            }))?,
            vec![("sv".into(), m.sv.as_slice()), ("coef".into(), m.coef.as_slice())],
        ),
        ClassifierModel::Knn(m) => (
            to_meta(serde_json::to_value(KnnMeta {
                k: m.k,
                dim: m.dim,
                labels: m.labels.iter().map(|&l| class_of(l) as u8).collect(),
            }))?,
            vec![("points".into(), m.points.as_slice())],
        ),
    };
    let header = ModelHeader {
        kind: model.kind().to_string(),
        version: MODEL_VERSION,
        embedding_digest,
        meta,
        blobs: blobs.iter().map(|(n, d)| (n.clone(), d.len())).collect(),
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(MODEL_MAGIC).map_err(|e| Error::io(path, e))?;
    let header_json = serde_json::to_string(&header)
        .map_err(|e| Error::Schema(format!("model header serialization failed: {e}")))?;
    w.write_all(header_json.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    for (_, data) in &blobs {
        write_blob(&mut w, data, path)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Loads a model file written by [`save_model`]. Returns the model and
/// the recorded embedding digest, if any.
pub fn load_model(path: &Path) -> Result<(ClassifierModel, Option<String>)> {
    let bad = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if magic != MODEL_MAGIC {
        return Err(bad(1, "not a classifier model file (bad magic)".into()));
    }
    let mut header_line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte).map_err(|e| Error::io(path, e))?;
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
        if header_line.len() > 64 * 1024 * 1024 {
            return Err(bad(2, "unterminated model header".into()));
        }
    }
    let header: ModelHeader = serde_json::from_slice(&header_line)
        .map_err(|e| bad(2, format!("bad model header: {e}")))?;
    if header.version != MODEL_VERSION {
        return Err(bad(2, format!("unsupported model version {}", header.version)));
    }
    let mut blobs: HashMap<String, Vec<f64>> = HashMap::new();
    for (name, len) in &header.blobs {
        blobs.insert(name.clone(), read_blob(&mut r, *len, path)?);
    }
    let mut take = |name: &str| {
        blobs
            .remove(name)
            .ok_or_else(|| bad(2, format!("model file is missing the {name:?} matrix")))
    };
    let meta_err = |e: serde_json::Error| bad(2, format!("bad {} metadata: {e}", header.kind));
    let model = match header.kind.as_str() {
        "linear" => {
            let meta: LinearMeta = serde_json::from_value(header.meta).map_err(meta_err)?;
            let embed = take("embed")?;
            let w = take("w")?;
            let b = take("b")?;
            if embed.len() != meta.words.len() * meta.dim || w.len() != meta.dim * 2 || b.len() != 2
            {
                return Err(bad(2, "linear matrix shapes disagree with metadata".into()));
            }
            let index = meta
                .words
                .iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), i))
                .collect();
            ClassifierModel::Linear(LinearAvgModel {
                dim: meta.dim,
                words: meta.words,
                index,
                embed,
                w,
                b: [b[0], b[1]],
            })
        }
        "cnn" => {
            let meta: CnnMeta = serde_json::from_value(header.meta).map_err(meta_err)?;
            let lens = layer_lengths(meta.seq_len, meta.kernel, &meta.pools)?;
            let embed = take("embed")?;
            if embed.len() != (meta.words.len() + 1) * meta.dim {
                return Err(bad(2, "CNN embedding shape disagrees with metadata".into()));
            }
            let mut convs = Vec::with_capacity(meta.pools.len());
            let mut cin = meta.dim;
            for i in 0..meta.pools.len() {
                let w = take(&format!("conv{i}.w"))?;
                let b = take(&format!("conv{i}.b"))?;
                if w.len() != meta.kernel * cin * meta.filters || b.len() != meta.filters {
                    return Err(bad(2, format!("conv{i} shape disagrees with metadata")));
                }
                convs.push(Conv {
                    k: meta.kernel,
                    cin,
                    cout: meta.filters,
                    w,
                    b,
                });
                cin = meta.filters;
            }
            let flat = lens.last().unwrap() * meta.filters;
            let dense1 = Dense {
                fin: flat,
                fout: meta.dense_width,
                w: take("dense1.w")?,
                b: take("dense1.b")?,
            };
            let dense2 = Dense {
                fin: meta.dense_width,
                fout: 2,
                w: take("dense2.w")?,
                b: take("dense2.b")?,
            };
            if dense1.w.len() != flat * meta.dense_width || dense2.w.len() != meta.dense_width * 2 {
                return Err(bad(2, "dense shapes disagree with metadata".into()));
            }
            let index = meta
                .words
                .iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), i + 1))
                .collect();
            ClassifierModel::Cnn(CnnModel {
                seq_len: meta.seq_len,
                dim: meta.dim,
                kernel: meta.kernel,
                pools: meta.pools,
                filters: meta.filters,
                words: meta.words,
                index,
                embed,
                convs,
                dense1,
                dense2,
            })
        }
        "svm" => {
            let meta: SvmMeta = serde_json::from_value(header.meta).map_err(meta_err)?;
            let sv = take("sv")?;
            let coef = take("coef")?;
            if sv.len() != coef.len() * meta.dim {
                return Err(bad(2, "SVM matrix shapes disagree with metadata".into()));
            }
            ClassifierModel::Svm(SvmModel {
                gamma: meta.gamma,
                c: meta.c,
                bias: meta.bias,
                sv,
                coef,
                dim: meta.dim,
            })
        }
        "knn" => {
            let meta: KnnMeta = serde_json::from_value(header.meta).map_err(meta_err)?;
            let points = take("points")?;
            if points.len() != meta.labels.len() * meta.dim {
                return Err(bad(2, "kNN matrix shapes disagree with metadata".into()));
            }
            ClassifierModel::Knn(KnnModel {
                k: meta.k,
                dim: meta.dim,
                points,
                labels: meta.labels.iter().map(|&c| label_of(c as usize)).collect(),
            })
        }
        other => return Err(bad(2, format!("unknown model kind {other:?}"))),
    };
    Ok((model, header.embedding_digest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::LabeledStatement;
    use proptest::prelude::*;

    /// Linearly separable two-block corpus: class A sentences draw from
    /// one vocabulary block, class B from another.
    fn separable_dataset(per_class: usize) -> Dataset {
        let a = ["alpha", "apex", "arch", "atom"];
        let b = ["brine", "bloom", "burst", "braid"];
        let mut v = Vec::new();
        for i in 0..per_class {
            let sa = format!("{} {} {}", a[i % 4], a[(i + 1) % 4], a[(i + 2) % 4]);
            let sb = format!("{} {} {}", b[i % 4], b[(i + 1) % 4], b[(i + 2) % 4]);
            v.push(LabeledStatement::new(Label::Eligible, sa));
            v.push(LabeledStatement::new(Label::NotEligible, sb));
        }
        Dataset::new(v)
    }

    fn shrunken_cnn_cfg() -> CnnConfig {
        CnnConfig {
            seq_len: 30,
            vocab_size: 100,
            filters: 4,
            kernel: 3,
            pools: vec![2, 2, 3],
            dense: 8,
            batch: 4,
            epochs: 3,
            ..CnnConfig::default()
        }
    }

    #[test]
    fn linear_learns_separable_corpus() {
        let ds = separable_dataset(40);
        let cfg = LinearConfig::default();
        let model = train_linear_avg(&ds, None, &cfg, 16, 1).unwrap();
        let correct = ds
            .statements
            .iter()
            .filter(|s| model.predict(&s.text).label == s.label)
            .count();
        let acc = correct as f64 / ds.len() as f64;
        assert!(acc >= 0.99, "training accuracy {acc}");
    }

    #[test]
    fn linear_zero_epochs_is_chance_level() {
        let ds = separable_dataset(50);
        let cfg = LinearConfig {
            epochs: 0,
            ..LinearConfig::default()
        };
        let model = train_linear_avg(&ds, None, &cfg, 16, 1).unwrap();
        // untrained output layer is all zero → scores exactly (0.5, 0.5)
        // → every prediction falls on the tie-break side
        let p = model.predict(&ds.statements[0].text);
        assert_eq!(p.scores, [0.5, 0.5]);
        let correct = ds
            .statements
            .iter()
            .filter(|s| model.predict(&s.text).label == s.label)
            .count();
        let acc = correct as f64 / ds.len() as f64;
        assert!((acc - 0.5).abs() <= 0.05, "chance-level accuracy, got {acc}");
    }

    #[test]
    fn linear_scores_form_a_distribution() {
        let ds = separable_dataset(10);
        let model = train_linear_avg(&ds, None, &LinearConfig::default(), 8, 3).unwrap();
        for s in &ds.statements {
            let p = model.predict(&s.text);
            assert!(p.scores.iter().all(|&x| x >= 0.0));
            assert!((p.scores[0] + p.scores[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_flags_all_oov_statements() {
        let ds = separable_dataset(5);
        let model = train_linear_avg(&ds, None, &LinearConfig::default(), 8, 3).unwrap();
        let p = model.predict("zzz qqq");
        assert!(p.low_confidence);
        let p = model.predict(&ds.statements[0].text);
        assert!(!p.low_confidence);
    }

    #[test]
    fn linear_uses_pretrained_vectors() {
        let corpus: Vec<String> = separable_dataset(30)
            .statements
            .iter()
            .map(|s| s.text.clone())
            .collect();
        let emb_cfg = crate::config::EmbeddingConfig {
            dim: 12,
            min_count: 1,
            epochs: 3,
            subwords: false,
            sampling_threshold: Some(1.0),
            ..crate::config::EmbeddingConfig::default()
        };
        let (emb, _) = crate::embed::train(&corpus, &emb_cfg, 5, 1).unwrap();
        let ds = separable_dataset(30);
        let model = train_linear_avg(&ds, Some(&emb), &LinearConfig::default(), 99, 1).unwrap();
        assert_eq!(model.dim, 12); // dim follows the pretrained space
    }

    #[test]
    fn cnn_shape_chain_matches_topology() {
        let ds = separable_dataset(4);
        let cfg = CnnConfig::default();
        let model = CnnModel::new(&ds, &EmbedSource::Random { dim: 8 }, &cfg, 1).unwrap();
        assert_eq!(model.shape_chain(), vec![996, 199, 195, 39, 35, 1]);
    }

    #[test]
    fn cnn_rejects_too_short_sequences() {
        let ds = separable_dataset(4);
        let cfg = CnnConfig {
            seq_len: 20,
            ..CnnConfig::default()
        };
        let err = CnnModel::new(&ds, &EmbedSource::Random { dim: 8 }, &cfg, 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn cnn_forward_is_a_distribution_and_deterministic() {
        let ds = separable_dataset(4);
        let cfg = shrunken_cnn_cfg();
        let model = CnnModel::new(&ds, &EmbedSource::Random { dim: 6 }, &cfg, 2).unwrap();
        for s in &ds.statements[..2] {
            let p = model.predict(&s.text);
            assert!((p.scores[0] + p.scores[1] - 1.0).abs() < 1e-9);
            assert_eq!(p, model.predict(&s.text));
        }
    }

    #[test]
    fn cnn_with_zero_output_layer_scores_half() {
        let ds = separable_dataset(4);
        let cfg = shrunken_cnn_cfg();
        let mut model = CnnModel::new(&ds, &EmbedSource::Random { dim: 6 }, &cfg, 2).unwrap();
        model.dense2.w.iter_mut().for_each(|w| *w = 0.0);
        model.dense2.b.iter_mut().for_each(|b| *b = 0.0);
        let p = model.predict(&ds.statements[0].text);
        assert_eq!(p.scores, [0.5, 0.5]);
    }

    #[test]
    fn cnn_encode_truncates_and_pads() {
        let ds = separable_dataset(4);
        let cfg = shrunken_cnn_cfg();
        let model = CnnModel::new(&ds, &EmbedSource::Random { dim: 6 }, &cfg, 2).unwrap();
        let enc = model.encode("alpha unknowntoken brine");
        assert_eq!(enc.len(), 30);
        assert!(enc[0] > 0);
        assert_eq!(enc[1], 0); // OOV
        assert!(enc[2] > 0);
        assert!(enc[3..].iter().all(|&i| i == 0)); // padding
        let long = vec!["alpha"; 100].join(" ");
        assert_eq!(model.encode(&long).len(), 30);
    }

    #[test]
    fn cnn_gradients_match_finite_differences() {
        let ds = separable_dataset(3);
        let cfg = shrunken_cnn_cfg();
        let mut model = CnnModel::new(&ds, &EmbedSource::Random { dim: 6 }, &cfg, 7).unwrap();
        // a differentiable point needs the whole sequence filled with
        // in-vocab tokens (no zero padding rows)
        let long: Vec<&str> = ["alpha", "apex", "arch", "atom", "brine", "bloom", "burst", "braid"]
            .into_iter()
            .cycle()
            .take(cfg.seq_len)
            .collect();
        let text = long.join(" ");
        assert!(model.encode(&text).iter().all(|&i| i > 0));
        let max_rel = model.gradient_check(&text, 1);
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn cnn_loss_decreases_on_fixed_batch() {
        let cfg = shrunken_cnn_cfg();
        // full-length statements so every position carries signal
        let a = ["alpha", "apex", "arch", "atom"];
        let b = ["brine", "bloom", "burst", "braid"];
        let mut v = Vec::new();
        for i in 0..8 {
            let sa: Vec<&str> = (0..cfg.seq_len).map(|t| a[(i + t) % 4]).collect();
            let sb: Vec<&str> = (0..cfg.seq_len).map(|t| b[(i + t * 2) % 4]).collect();
            v.push(LabeledStatement::new(Label::Eligible, sa.join(" ")));
            v.push(LabeledStatement::new(Label::NotEligible, sb.join(" ")));
        }
        let ds = Dataset::new(v);
        let mut model = CnnModel::new(&ds, &EmbedSource::Random { dim: 6 }, &cfg, 3).unwrap();
        let batch: Vec<(Vec<usize>, usize)> = ds
            .statements
            .iter()
            .map(|s| (model.encode(&s.text), class_of(s.label)))
            .collect();
        let mut optimizer = CnnOptimizer::new(&model, &cfg);
        let mut losses = Vec::new();
        for _ in 0..6 {
            let mut grads = CnnGrads::zeros_like(&model);
            let mut loss = 0.0;
            for (enc, class) in &batch {
                loss += cnn_backward(&model, enc, *class, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            losses.push(loss / batch.len() as f64);
            optimizer.step(&mut model, &grads);
        }
        for w in losses.windows(2).take(5) {
            assert!(w[1] < w[0], "losses not strictly decreasing: {losses:?}");
        }
    }

    #[test]
    fn cnn_trains_on_separable_data() {
        let ds = separable_dataset(16);
        let cfg = CnnConfig {
            learning_rate: 0.01,
            epochs: 10,
            ..shrunken_cnn_cfg()
        };
        let (model, losses) = train_cnn(&ds, &EmbedSource::Random { dim: 6 }, &cfg, 4).unwrap();
        assert_eq!(losses.len(), cfg.epochs);
        assert!(losses.last().unwrap() < losses.first().unwrap());
        let correct = ds
            .statements
            .iter()
            .filter(|s| model.predict(&s.text).label == s.label)
            .count();
        assert!(correct as f64 / ds.len() as f64 > 0.9);
    }

    #[test]
    fn svm_two_points_analytic_solution() {
        let cfg = SvmConfig::default();
        let data = vec![
            (vec![0.0], Label::Eligible),
            (vec![1.0], Label::NotEligible),
        ];
        let model = train_svm(&data, &cfg).unwrap();
        assert_eq!(model.n_support(), 2);
        // both α clip at C=1; decision(x1) = 1 − e^{−1}, bias 0
        let expect = 1.0 - (-1.0f64).exp();
        assert!((model.decision(&[0.0]) - expect).abs() < 1e-9);
        assert!((model.decision(&[1.0]) + expect).abs() < 1e-9);
        assert!(model.bias.abs() < 1e-9);
        assert_eq!(model.predict_vec(&[0.0], false).label, Label::Eligible);
        assert_eq!(model.predict_vec(&[1.0], false).label, Label::NotEligible);
    }

    #[test]
    fn svm_solves_xor_with_rbf() {
        let cfg = SvmConfig::default();
        let data = vec![
            (vec![0.0, 0.0], Label::Eligible),
            (vec![1.0, 1.0], Label::Eligible),
            (vec![0.0, 1.0], Label::NotEligible),
            (vec![1.0, 0.0], Label::NotEligible),
        ];
        let model = train_svm(&data, &cfg).unwrap();
        for (x, l) in &data {
            assert_eq!(model.predict_vec(x, false).label, *l, "point {x:?}");
        }
        // analytic decision value by symmetry: all α at C=1, bias 0
        let expect = 1.0 + (-2.0f64).exp() - 2.0 * (-1.0f64).exp();
        assert!((model.decision(&[0.0, 0.0]) - expect).abs() < 1e-6);
        assert!(model.bias.abs() < 1e-6);
    }

    #[test]
    fn svm_dual_coefficients_bounded_and_kkt_holds() {
        let cfg = SvmConfig::default();
        let mut data = Vec::new();
        let mut state = 33u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        for i in 0..60 {
            let cls = i % 2;
            let base = if cls == 0 { 0.0 } else { 2.0 };
            let v = vec![base + next() * 0.8, base + next() * 0.8];
            data.push((v, if cls == 0 { Label::Eligible } else { Label::NotEligible }));
        }
        let model = train_svm(&data, &cfg).unwrap();
        assert!(model.coef.iter().all(|c| c.abs() <= cfg.c + 1e-12));

        // KKT within tolerance: margins respect the dual box constraints
        for (x, l) in &data {
            let y = if *l == Label::Eligible { 1.0 } else { -1.0 };
            let m = y * model.decision(x);
            // find this point's α in the model (0 if not a support vector)
            let alpha = (0..model.n_support())
                .find(|&i| model.sv[i * model.dim..(i + 1) * model.dim] == x[..])
                .map(|i| model.coef[i].abs())
                .unwrap_or(0.0);
            if alpha < 1e-9 {
                assert!(m >= 1.0 - 1e-2, "non-SV must have margin ≥ 1, got {m}");
            } else if alpha < cfg.c - 1e-9 {
                assert!((m - 1.0).abs() < 1e-2, "free SV must sit on the margin, got {m}");
            } else {
                assert!(m <= 1.0 + 1e-2, "bounded SV must be inside the margin, got {m}");
            }
        }
    }

    #[test]
    fn svm_is_invariant_under_training_permutation() {
        // the dual optimum is unique for an RBF kernel on distinct points,
        // so with a tight solver tolerance both orders must converge to
        // the same decision function
        let cfg = SvmConfig {
            tolerance: 1e-8,
            ..SvmConfig::default()
        };
        let data = vec![
            (vec![0.1, 0.2], Label::Eligible),
            (vec![0.3, 0.1], Label::Eligible),
            (vec![2.1, 2.0], Label::NotEligible),
            (vec![1.9, 2.2], Label::NotEligible),
            (vec![0.2, 0.4], Label::Eligible),
            (vec![2.3, 1.8], Label::NotEligible),
        ];
        let mut permuted = data.clone();
        permuted.reverse();
        permuted.swap(1, 3);
        let m1 = train_svm(&data, &cfg).unwrap();
        let m2 = train_svm(&permuted, &cfg).unwrap();
        for gx in 0..5 {
            for gy in 0..5 {
                let x = [gx as f64 * 0.6, gy as f64 * 0.6];
                assert!(
                    (m1.decision(&x) - m2.decision(&x)).abs() < 1e-6,
                    "decision differs at {x:?}"
                );
            }
        }
    }

    #[test]
    fn svm_refuses_over_budget_and_single_class() {
        let cfg = SvmConfig {
            budget: 3,
            ..SvmConfig::default()
        };
        let data: Vec<(Vec<f64>, Label)> = (0..4)
            .map(|i| (vec![i as f64], if i % 2 == 0 { Label::Eligible } else { Label::NotEligible }))
            .collect();
        let err = train_svm(&data, &cfg).unwrap_err();
        assert!(matches!(err, Error::Budget(_)));
        assert_eq!(err.exit_code(), 4);

        let one_class: Vec<(Vec<f64>, Label)> =
            (0..4).map(|i| (vec![i as f64], Label::Eligible)).collect();
        assert!(train_svm(&one_class, &SvmConfig::default()).is_err());
    }

    #[test]
    fn knn_stores_and_votes() {
        let cfg = KnnConfig { k: 1 };
        let data: Vec<(Vec<f64>, Label)> = (0..10)
            .map(|i| {
                (
                    vec![i as f64, 0.0],
                    if i < 5 { Label::Eligible } else { Label::NotEligible },
                )
            })
            .collect();
        let model = train_knn(&data, &cfg).unwrap();
        assert_eq!(model.len(), 10);
        // k=1 on a stored training point returns its own label
        for (x, l) in &data {
            assert_eq!(model.predict_vec(x, false).label, *l);
        }
    }

    #[test]
    fn knn_majority_vote_fraction() {
        let cfg = KnnConfig { k: 3 };
        let data = vec![
            (vec![0.0, 0.0], Label::NotEligible),
            (vec![0.1, 0.0], Label::NotEligible),
            (vec![0.2, 0.0], Label::Eligible),
            (vec![9.0, 9.0], Label::Eligible),
        ];
        let model = train_knn(&data, &cfg).unwrap();
        // query near the first three: two NotEligible, one Eligible
        let p = model.predict_vec(&[0.05, 0.0], false);
        assert_eq!(p.label, Label::NotEligible);
        assert!((p.scores[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.scores[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn knn_rejects_bad_k_and_empty() {
        assert!(train_knn(&[], &KnnConfig { k: 1 }).is_err());
        let data = vec![(vec![0.0], Label::Eligible), (vec![1.0], Label::NotEligible)];
        assert!(train_knn(&data, &KnnConfig { k: 3 }).is_err());
        assert!(train_knn(&data, &KnnConfig { k: 0 }).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn knn_matches_exhaustive_oracle(
            points in proptest::collection::vec(
                (proptest::collection::vec(-5.0f64..5.0, 3), prop::bool::ANY), 3..40),
            query in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let data: Vec<(Vec<f64>, Label)> = points
                .iter()
                .map(|(v, b)| (v.clone(), if *b { Label::Eligible } else { Label::NotEligible }))
                .collect();
            let model = train_knn(&data, &KnnConfig { k: 3 }).unwrap();
            let got = model.predict_vec(&query, false);

            // independent oracle: full sort of (distance, index) pairs
            let mut ranked: Vec<(f64, usize)> = data
                .iter()
                .enumerate()
                .map(|(i, (v, _))| {
                    let d: f64 = v.iter().zip(&query).map(|(a, b)| (a - b).powi(2)).sum();
                    (d, i)
                })
                .collect();
            ranked.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let votes = ranked
                .iter()
                .take(3)
                .filter(|(_, i)| data[*i].1 == Label::Eligible)
                .count();
            let expected = if votes >= 2 { Label::Eligible } else { Label::NotEligible };
            prop_assert_eq!(got.label, expected);
            prop_assert!((got.scores[1] - votes as f64 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn model_files_round_trip_all_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let ds = separable_dataset(8);
        let linear = train_linear_avg(&ds, None, &LinearConfig { epochs: 5, ..LinearConfig::default() }, 8, 1).unwrap();
        let (cnn, _) = train_cnn(&ds, &EmbedSource::Random { dim: 6 }, &shrunken_cnn_cfg(), 1).unwrap();
        let vec_data = vec![
            (vec![0.0, 0.0], Label::Eligible),
            (vec![1.0, 1.0], Label::NotEligible),
            (vec![0.1, 0.0], Label::Eligible),
        ];
        let svm = train_svm(&vec_data, &SvmConfig::default()).unwrap();
        let knn = train_knn(&vec_data, &KnnConfig { k: 1 }).unwrap();

        let emb = EmbeddingModel::from_vectors(
            vec!["alpha".into(), "brine".into()],
            vec![vec![0.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap();

        for (name, model) in [
            ("linear", ClassifierModel::Linear(linear)),
            ("cnn", ClassifierModel::Cnn(cnn)),
            ("svm", ClassifierModel::Svm(svm)),
            ("knn", ClassifierModel::Knn(knn)),
        ] {
            let path = dir.path().join(format!("{name}.model"));
            save_model(&model, Some("abc123".into()), &path).unwrap();
            let (loaded, digest) = load_model(&path).unwrap();
            assert_eq!(digest.as_deref(), Some("abc123"));
            assert_eq!(loaded.kind(), name);
            let text = "alpha brine";
            let a = model.predict(text, Some(&emb)).unwrap();
            let b = loaded.predict(text, Some(&emb)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn model_file_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.model");
        std::fs::write(&path, "not a model").unwrap();
        assert!(load_model(&path).is_err());
        std::fs::write(&path, b"ELIGMDL1\n{\"kind\":\"nope\",\"payload\":{}}\n").unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn vector_models_require_embedding_context() {
        let data = vec![(vec![0.0], Label::Eligible), (vec![1.0], Label::NotEligible)];
        let knn = ClassifierModel::Knn(train_knn(&data, &KnnConfig { k: 1 }).unwrap());
        let err = knn.predict("anything", None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
