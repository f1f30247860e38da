//! Word embeddings trained with negative sampling: skip-gram or CBOW over
//! a dynamic context window, optional character n-gram subwords hashed
//! into a fixed bucket table, frequency subsampling, and linear
//! learning-rate decay. Also the vector operations built on the trained
//! space: sentence averaging, nearest neighbors, and 3CosMul analogies.
//!
//! Matrices store `f64` bits in relaxed atomics so multi-worker training
//! can run lock-free (lost updates tolerated, as in the reference
//! implementations); single-threaded training is bit-reproducible given a
//! seed and is what every test relies on.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{EmbeddingConfig, EmbeddingMode};
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// One `f64` cell readable and writable through a shared reference.
/// Relaxed ordering everywhere: racy read-modify-write during parallel
/// training is tolerated by design.
#[derive(Debug)]
pub(crate) struct Real(AtomicU64);

impl Real {
    fn new(v: f64) -> Self {
        Real(AtomicU64::new(v.to_bits()))
    }

    #[inline]
    fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    #[inline]
    fn set(&self, v: f64) {
        self.0.store(v.to_bits(), Ordering::Relaxed);
    }

    #[inline]
    fn add(&self, d: f64) {
        self.set(self.get() + d);
    }
}

impl Clone for Real {
    fn clone(&self) -> Self {
        Real::new(self.get())
    }
}

fn zeros(n: usize) -> Vec<Real> {
    (0..n).map(|_| Real::new(0.0)).collect()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Words retained after the min-count cut, with the two sampling
/// distributions derived from their counts: per-word keep probability for
/// frequency subsampling and the cumulative negative-sampling
/// distribution (counts raised to an exponent, normalized).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
    keep_prob: Vec<f64>,
    neg_cdf: Vec<f64>,
    total_tokens: u64,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn keep_prob(&self, idx: usize) -> f64 {
        self.keep_prob[idx]
    }

    /// Draws one word index from the negative-sampling distribution.
    fn sample_negative<R: Rng>(&self, rng: &mut R) -> usize {
        let r: f64 = rng.gen();
        self.neg_cdf.partition_point(|&c| c < r).min(self.words.len() - 1)
    }

    /// Builds a vocabulary for inference over a fixed word list (uniform
    /// counts; both sampling distributions are degenerate).
    fn for_inference(words: Vec<String>) -> Vocabulary {
        let n = words.len();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        let neg_cdf = (1..=n).map(|i| i as f64 / n as f64).collect();
        Vocabulary {
            index,
            counts: vec![1; n],
            keep_prob: vec![1.0; n],
            neg_cdf,
            total_tokens: n as u64,
            words,
        }
    }
}

/// Counts tokens and keeps words occurring at least `min_count` times.
/// Keep probability uses the composite form
/// `p(w) = min(1, sqrt(t/f) + t/f)` (or plain `min(1, sqrt(t/f))` with
/// `simple_subsample`); the negative distribution is `count^exponent`,
/// normalized, stored as a CDF.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], cfg: &EmbeddingConfig) -> Result<Vocabulary> {
    let mut raw: HashMap<&str, u64> = HashMap::new();
    let mut total: u64 = 0;
    for stmt in corpus {
        for tok in stmt.as_ref().split_whitespace() {
            *raw.entry(tok).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut pairs: Vec<(&str, u64)> = raw
        .into_iter()
        .filter(|(_, c)| *c >= cfg.min_count)
        .collect();
    if pairs.is_empty() {
        return Err(Error::Data(format!(
            "no word reaches min_count = {}",
            cfg.min_count
        )));
    }
    // most frequent first; ties alphabetical for stable indices
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let words: Vec<String> = pairs.iter().map(|(w, _)| (*w).to_string()).collect();
    let counts: Vec<u64> = pairs.iter().map(|(_, c)| *c).collect();
    let index = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();

    let t = cfg.effective_sampling_threshold();
    let keep_prob = counts
        .iter()
        .map(|&c| {
            let f = c as f64 / total as f64;
            let p = if cfg.simple_subsample {
                (t / f).sqrt()
            } else {
                (t / f).sqrt() + t / f
            };
            p.clamp(f64::MIN_POSITIVE, 1.0)
        })
        .collect();

    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(cfg.neg_exponent)).collect();
    let total_weight: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let neg_cdf = weights
        .iter()
        .map(|w| {
            acc += w / total_weight;
            acc
        })
        .collect();

    Ok(Vocabulary {
        words,
        index,
        counts,
        keep_prob,
        neg_cdf,
        total_tokens: total,
    })
}

// ---------------------------------------------------------------------------
// Subwords
// ---------------------------------------------------------------------------

/// FNV-1a over the n-gram bytes, as used by the reference subword
/// implementation.
fn fnv1a_32(s: &str) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for b in s.bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(16_777_619);
    }
    h
}

/// Character n-grams of `word` wrapped in boundary markers, mapped to
/// bucket ids.
pub fn ngram_buckets(word: &str, min_n: usize, max_n: usize, buckets: usize) -> Vec<u64> {
    let bounded: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    for n in min_n..=max_n.min(bounded.len()) {
        for start in 0..=(bounded.len() - n) {
            let gram: String = bounded[start..start + n].iter().collect();
            out.push(u64::from(fnv1a_32(&gram)) % buckets as u64);
        }
    }
    out
}

/// Deterministic initial vector for a bucket: uniform in
/// `[-0.5/dim, 0.5/dim)`, derived only from the model seed and the bucket
/// id, so untouched buckets read identically whether or not they were
/// ever materialized.
fn init_bucket(seed: u64, bucket: u64, dim: usize) -> Vec<f64> {
    let mut state = seed ^ bucket.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut next = move || {
        // splitmix64
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    (0..dim)
        .map(|_| ((next() >> 11) as f64 / (1u64 << 53) as f64 - 0.5) / dim as f64)
        .collect()
}

/// Hashed bucket vectors for the n-grams of all vocabulary words. Only
/// buckets actually reachable from the vocabulary are materialized (the
/// full table would dwarf the vocabulary); out-of-vocabulary n-grams at
/// inference fall back to the deterministic initial vector.
#[derive(Debug)]
pub struct SubwordTable {
    pub min_n: usize,
    pub max_n: usize,
    pub buckets: usize,
    dim: usize,
    seed: u64,
    /// bucket id → slot in `vecs`
    slot_of: HashMap<u64, u32>,
    /// slot-ordered bucket ids (for serialization)
    slot_buckets: Vec<u64>,
    vecs: Vec<Real>,
    /// per-vocabulary-word slot lists, aligned with vocabulary indices
    word_slots: Vec<Vec<u32>>,
}

impl Clone for SubwordTable {
    fn clone(&self) -> Self {
        SubwordTable {
            min_n: self.min_n,
            max_n: self.max_n,
            buckets: self.buckets,
            dim: self.dim,
            seed: self.seed,
            slot_of: self.slot_of.clone(),
            slot_buckets: self.slot_buckets.clone(),
            vecs: self.vecs.clone(),
            word_slots: self.word_slots.clone(),
        }
    }
}

impl SubwordTable {
    fn new(vocab: &Vocabulary, cfg: &EmbeddingConfig, seed: u64) -> SubwordTable {
        let mut slot_of: HashMap<u64, u32> = HashMap::new();
        let mut slot_buckets: Vec<u64> = Vec::new();
        let mut word_slots = Vec::with_capacity(vocab.len());
        for word in vocab.words() {
            let slots = ngram_buckets(word, cfg.min_n, cfg.max_n, cfg.buckets)
                .into_iter()
                .map(|b| {
                    *slot_of.entry(b).or_insert_with(|| {
                        slot_buckets.push(b);
                        (slot_buckets.len() - 1) as u32
                    })
                })
                .collect();
            word_slots.push(slots);
        }
        let mut vecs = Vec::with_capacity(slot_buckets.len() * cfg.dim);
        for &b in &slot_buckets {
            for v in init_bucket(seed, b, cfg.dim) {
                vecs.push(Real::new(v));
            }
        }
        SubwordTable {
            min_n: cfg.min_n,
            max_n: cfg.max_n,
            buckets: cfg.buckets,
            dim: cfg.dim,
            seed,
            slot_of,
            slot_buckets,
            vecs,
            word_slots,
        }
    }

    /// Current vector of a bucket: the trained slot if materialized, the
    /// deterministic initial vector otherwise.
    fn bucket_vector(&self, bucket: u64) -> Vec<f64> {
        match self.slot_of.get(&bucket) {
            Some(&s) => {
                let s = s as usize;
                self.vecs[s * self.dim..(s + 1) * self.dim]
                    .iter()
                    .map(Real::get)
                    .collect()
            }
            None => init_bucket(self.seed, bucket, self.dim),
        }
    }

    /// Mean of the n-gram bucket vectors of an arbitrary word; None when
    /// the word yields no n-grams.
    fn ngram_mean(&self, word: &str) -> Option<Vec<f64>> {
        let grams = ngram_buckets(word, self.min_n, self.max_n, self.buckets);
        if grams.is_empty() {
            return None;
        }
        let mut acc = vec![0.0; self.dim];
        for b in &grams {
            for (a, v) in acc.iter_mut().zip(self.bucket_vector(*b)) {
                *a += v;
            }
        }
        let m = grams.len() as f64;
        for a in &mut acc {
            *a /= m;
        }
        Some(acc)
    }

    /// Adds the n-gram mean of vocabulary word `idx` into `dst`.
    fn add_word_ngram_mean(&self, idx: usize, dst: &mut [f64]) {
        let slots = &self.word_slots[idx];
        if slots.is_empty() {
            return;
        }
        let m = slots.len() as f64;
        for &s in slots {
            let s = s as usize;
            for (j, d) in dst.iter_mut().enumerate() {
                *d += self.vecs[s * self.dim + j].get() / m;
            }
        }
    }

    /// Applies gradient `g` to the n-gram vectors of vocabulary word
    /// `idx`, scaled by 1/m per the mean composition.
    fn apply_word_gradient(&self, idx: usize, g: &[f64]) {
        let slots = &self.word_slots[idx];
        if slots.is_empty() {
            return;
        }
        let m = slots.len() as f64;
        for &s in slots {
            let s = s as usize;
            for (j, gj) in g.iter().enumerate() {
                self.vecs[s * self.dim + j].add(gj / m);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Trained embedding space. The represented vector of an in-vocabulary
/// word is its input vector plus, with subwords enabled, the mean of its
/// n-gram bucket vectors.
#[derive(Debug)]
pub struct EmbeddingModel {
    pub vocab: Vocabulary,
    pub dim: usize,
    pub mode: EmbeddingMode,
    input: Vec<Real>,
    output: Vec<Real>,
    subword: Option<SubwordTable>,
}

impl Clone for EmbeddingModel {
    fn clone(&self) -> Self {
        EmbeddingModel {
            vocab: self.vocab.clone(),
            dim: self.dim,
            mode: self.mode,
            input: self.input.clone(),
            output: self.output.clone(),
            subword: self.subword.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Cosine,
    Euclidean,
}

/// Per-epoch mean logistic loss (per trained pair), recorded during
/// training.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainStats {
    pub epoch_loss: Vec<f64>,
    pub pairs_trained: u64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl EmbeddingModel {
    /// Uniform input initialization in `[-0.5/dim, 0.5/dim)`, zero output
    /// vectors.
    fn init(vocab: Vocabulary, cfg: &EmbeddingConfig, seed: u64) -> EmbeddingModel {
        let mut rng = rng_for(seed, "embed.init");
        let v = vocab.len();
        let input: Vec<Real> = (0..v * cfg.dim)
            .map(|_| Real::new((rng.gen::<f64>() - 0.5) / cfg.dim as f64))
            .collect();
        let subword = cfg
            .subwords
            .then(|| SubwordTable::new(&vocab, cfg, seed));
        EmbeddingModel {
            vocab,
            dim: cfg.dim,
            mode: cfg.mode,
            input,
            output: zeros(v * cfg.dim),
            subword,
        }
    }

    /// Builds a plain-mode model from externally supplied vectors; used by
    /// tests and by consumers that compose spaces by hand.
    pub fn from_vectors(words: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<EmbeddingModel> {
        if words.len() != vectors.len() {
            return Err(Error::Data(format!(
                "{} words but {} vectors",
                words.len(),
                vectors.len()
            )));
        }
        let dim = vectors.first().map(Vec::len).ok_or_else(|| {
            Error::Data("cannot build a model from zero vectors".into())
        })?;
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Data("inconsistent vector dimensions".into()));
        }
        let input = vectors
            .iter()
            .flat_map(|v| v.iter().map(|&x| Real::new(x)))
            .collect();
        let n = words.len();
        Ok(EmbeddingModel {
            vocab: Vocabulary::for_inference(words),
            dim,
            mode: EmbeddingMode::Skipgram,
            input,
            output: zeros(n * dim),
            subword: None,
        })
    }

    pub fn has_subwords(&self) -> bool {
        self.subword.is_some()
    }

    fn input_row(&self, idx: usize) -> Vec<f64> {
        self.input[idx * self.dim..(idx + 1) * self.dim]
            .iter()
            .map(Real::get)
            .collect()
    }

    /// Represented vector of vocabulary word `idx`.
    pub fn represented(&self, idx: usize) -> Vec<f64> {
        let mut v = self.input_row(idx);
        if let Some(sw) = &self.subword {
            sw.add_word_ngram_mean(idx, &mut v);
        }
        v
    }

    /// Vector for any word. In-vocabulary words get their represented
    /// vector. Out-of-vocabulary words get the mean of their n-gram bucket
    /// vectors in subword mode, or a zero vector in plain mode; the second
    /// element flags OOV.
    pub fn vector(&self, word: &str) -> (Vec<f64>, bool) {
        if let Some(idx) = self.vocab.index_of(word) {
            return (self.represented(idx), false);
        }
        if let Some(sw) = &self.subword {
            if let Some(v) = sw.ngram_mean(word) {
                return (v, true);
            }
        }
        (vec![0.0; self.dim], true)
    }

    /// Arithmetic mean of token vectors. Plain-mode OOV tokens are
    /// skipped; an all-OOV (or all-skipped) sentence yields a zero vector
    /// with the flag set.
    pub fn sentence_vector(&self, text: &str) -> Result<(Vec<f64>, bool)> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(Error::Data("cannot embed an empty statement".into()));
        }
        let mut acc = vec![0.0; self.dim];
        let mut used = 0usize;
        for tok in tokens {
            let (v, oov) = self.vector(tok);
            if oov && !self.has_subwords() {
                continue;
            }
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            used += 1;
        }
        if used == 0 {
            return Ok((acc, true));
        }
        for a in &mut acc {
            *a /= used as f64;
        }
        Ok((acc, false))
    }

    /// Exact exhaustive nearest-neighbor scan over the vocabulary. Ties
    /// break toward the lower vocabulary index.
    pub fn nearest_vec(
        &self,
        query: &[f64],
        k: usize,
        metric: Metric,
        exclude: &[usize],
    ) -> Vec<(String, f64)> {
        let mut scored: Vec<(usize, f64)> = (0..self.vocab.len())
            .filter(|i| !exclude.contains(i))
            .map(|i| {
                let v = self.represented(i);
                let s = match metric {
                    Metric::Cosine => cosine(query, &v),
                    Metric::Euclidean => euclidean(query, &v),
                };
                (i, s)
            })
            .collect();
        match metric {
            Metric::Cosine => scored.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.0.cmp(&b.0))
            }),
            Metric::Euclidean => scored.sort_by(|a, b| {
                a.1.partial_cmp(&b.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.0.cmp(&b.0))
            }),
        }
        scored
            .into_iter()
            .take(k)
            .map(|(i, s)| (self.vocab.word(i).to_string(), s))
            .collect()
    }

    /// Neighbors of a word, the word itself excluded. Out-of-vocabulary
    /// queries are an error in plain mode and fall back to the n-gram
    /// vector in subword mode.
    pub fn nearest(&self, word: &str, k: usize, metric: Metric) -> Result<Vec<(String, f64)>> {
        match self.vocab.index_of(word) {
            Some(idx) => Ok(self.nearest_vec(&self.represented(idx), k, metric, &[idx])),
            None if self.has_subwords() => {
                let (v, _) = self.vector(word);
                Ok(self.nearest_vec(&v, k, metric, &[]))
            }
            None => Err(Error::Data(format!("word {word:?} is not in the vocabulary"))),
        }
    }

    /// Answers "a is to b as c is to ?" by the multiplicative objective:
    /// `cos'(x,b) · cos'(x,c) / (cos'(x,a) + ε)` with cosines shifted to
    /// [0,1] via `(1+cos)/2` and ε = 0.001.
    pub fn analogy_3cosmul(
        &self,
        a: &str,
        b: &str,
        c: &str,
        k: usize,
    ) -> Result<Vec<(String, f64)>> {
        const EPS: f64 = 0.001;
        let resolve = |w: &str| -> Result<Vec<f64>> {
            let (v, oov) = self.vector(w);
            if oov && !self.has_subwords() {
                return Err(Error::Data(format!("word {w:?} is not in the vocabulary")));
            }
            Ok(v)
        };
        let va = resolve(a)?;
        let vb = resolve(b)?;
        let vc = resolve(c)?;
        let shifted = |x: &[f64], y: &[f64]| (1.0 + cosine(x, y)) / 2.0;
        let mut scored: Vec<(usize, f64)> = (0..self.vocab.len())
            .filter(|&i| {
                let w = self.vocab.word(i);
                w != a && w != b && w != c
            })
            .map(|i| {
                let x = self.represented(i);
                let s = shifted(&x, &vb) * shifted(&x, &vc) / (shifted(&x, &va) + EPS);
                (i, s)
            })
            .collect();
        scored.sort_by(|p, q| {
            q.1.partial_cmp(&p.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| p.0.cmp(&q.0))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, s)| (self.vocab.word(i).to_string(), s))
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One logistic pair update. Returns the loss contribution and
/// accumulates the input-side gradient (times lr) into `grad_h`; the
/// output vector is updated in place.
#[inline]
fn update_pair(
    h: &[f64],
    output: &[Real],
    target: usize,
    dim: usize,
    label: f64,
    lr: f64,
    grad_h: &mut [f64],
) -> f64 {
    let base = target * dim;
    let mut score = 0.0;
    for j in 0..dim {
        score += h[j] * output[base + j].get();
    }
    let s = sigmoid(score);
    let g = (label - s) * lr;
    for j in 0..dim {
        grad_h[j] += g * output[base + j].get();
        output[base + j].add(g * h[j]);
    }
    if label > 0.5 {
        -s.max(1e-12).ln()
    } else {
        -(1.0 - s).max(1e-12).ln()
    }
}

/// Loss and analytic gradients of one logistic pair as the trainer
/// computes them: `(−ln σ(±h·u), ∂L/∂h, ∂L/∂u)` for label 1 / 0. Runs
/// the actual update kernel at learning rate 1 and reads the applied
/// deltas back, so a finite-difference check against this function
/// exercises the training code path itself.
pub fn pair_loss_gradients(h: &[f64], u: &[f64], label: f64) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(h.len(), u.len(), "pair vectors must share a dimension");
    let dim = h.len();
    let out: Vec<Real> = u.iter().map(|&x| Real::new(x)).collect();
    let mut grad_h = vec![0.0; dim];
    let loss = update_pair(h, &out, 0, dim, label, 1.0, &mut grad_h);
    // the kernel accumulates −∂L/∂h and applies −∂L/∂u to the row
    let grad_h = grad_h.iter().map(|g| -g).collect();
    let grad_u = out.iter().zip(u).map(|(c, &orig)| orig - c.get()).collect();
    (loss, grad_h, grad_u)
}

struct ShardResult {
    loss: f64,
    pairs: u64,
}

/// Trains one pass over `statements` (token-index sequences), updating
/// the shared matrices through the atomic cells.
#[allow(clippy::too_many_arguments)]
fn run_shard<R: Rng>(
    model: &EmbeddingModel,
    statements: &[Vec<usize>],
    cfg: &EmbeddingConfig,
    rng: &mut R,
    processed: &AtomicU64,
    total_expected: u64,
) -> ShardResult {
    let dim = model.dim;
    let negatives = cfg.negatives;
    let lr0 = cfg.learning_rate;
    let mut lr = lr0;
    let mut loss = 0.0;
    let mut pairs = 0u64;
    let mut h = vec![0.0; dim];
    let mut grad_h = vec![0.0; dim];
    let mut kept: Vec<usize> = Vec::new();

    for stmt in statements {
        kept.clear();
        for &w in stmt {
            if rng.gen::<f64>() < model.vocab.keep_prob(w) {
                kept.push(w);
            }
        }
        for pos in 0..kept.len() {
            let center = kept[pos];
            let done = processed.fetch_add(1, Ordering::Relaxed) + 1;
            if done % cfg.lr_update_rate as u64 == 0 {
                let frac = 1.0 - done as f64 / total_expected as f64;
                lr = lr0 * frac.max(1e-4);
            }
            let b = rng.gen_range(1..=cfg.window);
            let lo = pos.saturating_sub(b);
            let hi = (pos + b).min(kept.len() - 1);

            match cfg.mode {
                EmbeddingMode::Skipgram => {
                    // center predicts each context word; the hidden vector
                    // is re-read per pair so each update sees fresh weights
                    for ctx_pos in lo..=hi {
                        if ctx_pos == pos {
                            continue;
                        }
                        let ctx = kept[ctx_pos];
                        h.iter_mut().for_each(|x| *x = 0.0);
                        for (j, x) in model.input_row(center).into_iter().enumerate() {
                            h[j] = x;
                        }
                        if let Some(sw) = &model.subword {
                            sw.add_word_ngram_mean(center, &mut h);
                        }
                        grad_h.iter_mut().for_each(|g| *g = 0.0);
                        loss += update_pair(&h, &model.output, ctx, dim, 1.0, lr, &mut grad_h);
                        for _ in 0..negatives {
                            let neg = model.vocab.sample_negative(rng);
                            if neg == ctx {
                                continue;
                            }
                            loss += update_pair(&h, &model.output, neg, dim, 0.0, lr, &mut grad_h);
                        }
                        pairs += 1;
                        for j in 0..dim {
                            model.input[center * dim + j].add(grad_h[j]);
                        }
                        if let Some(sw) = &model.subword {
                            sw.apply_word_gradient(center, &grad_h);
                        }
                    }
                }
                EmbeddingMode::Cbow => {
                    // mean of context words predicts the center
                    let ctx_words: Vec<usize> = (lo..=hi)
                        .filter(|&p| p != pos)
                        .map(|p| kept[p])
                        .collect();
                    if ctx_words.is_empty() {
                        continue;
                    }
                    h.iter_mut().for_each(|x| *x = 0.0);
                    for &c in &ctx_words {
                        let row = model.input_row(c);
                        for j in 0..dim {
                            h[j] += row[j];
                        }
                        if let Some(sw) = &model.subword {
                            sw.add_word_ngram_mean(c, &mut h);
                        }
                    }
                    let cw = ctx_words.len() as f64;
                    h.iter_mut().for_each(|x| *x /= cw);

                    grad_h.iter_mut().for_each(|g| *g = 0.0);
                    loss += update_pair(&h, &model.output, center, dim, 1.0, lr, &mut grad_h);
                    for _ in 0..negatives {
                        let neg = model.vocab.sample_negative(rng);
                        if neg == center {
                            continue;
                        }
                        loss += update_pair(&h, &model.output, neg, dim, 0.0, lr, &mut grad_h);
                    }
                    pairs += 1;
                    // exact chain rule through the mean: each context word
                    // (and its n-grams) receives grad/cw
                    for &c in &ctx_words {
                        for j in 0..dim {
                            model.input[c * dim + j].add(grad_h[j] / cw);
                        }
                        if let Some(sw) = &model.subword {
                            let scaled: Vec<f64> = grad_h.iter().map(|g| g / cw).collect();
                            sw.apply_word_gradient(c, &scaled);
                        }
                    }
                }
            }
        }
    }
    ShardResult { loss, pairs }
}

/// Trains an embedding model. Deterministic given `seed` when
/// `threads <= 1`; with more workers, updates race benignly and results
/// vary run to run.
pub fn train<S: AsRef<str>>(
    corpus: &[S],
    cfg: &EmbeddingConfig,
    seed: u64,
    threads: usize,
) -> Result<(EmbeddingModel, TrainStats)> {
    let vocab = build_vocab(corpus, cfg)?;
    let statements: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| {
            s.as_ref()
                .split_whitespace()
                .filter_map(|t| vocab.index_of(t))
                .collect()
        })
        .collect();
    let corpus_tokens: u64 = statements.iter().map(|s| s.len() as u64).sum();
    if corpus_tokens < 2 {
        return Err(Error::Data(
            "corpus is smaller than one context window; nothing to train on".into(),
        ));
    }

    let model = EmbeddingModel::init(vocab, cfg, seed);
    let mut stats = TrainStats::default();
    let total_expected = (cfg.epochs as u64 * corpus_tokens).max(1);
    let processed = AtomicU64::new(0);
    let workers = threads.max(1).min(statements.len().max(1));

    if workers <= 1 {
        let mut rng = rng_for(seed, "embed.train");
        for _ in 0..cfg.epochs {
            let r = run_shard(&model, &statements, cfg, &mut rng, &processed, total_expected);
            stats.epoch_loss.push(r.loss / r.pairs.max(1) as f64);
            stats.pairs_trained += r.pairs;
        }
    } else {
        let shards: Vec<Vec<Vec<usize>>> = (0..workers)
            .map(|w| {
                statements
                    .iter()
                    .skip(w)
                    .step_by(workers)
                    .cloned()
                    .collect()
            })
            .collect();
        for epoch in 0..cfg.epochs {
            let results: Vec<ShardResult> = std::thread::scope(|scope| {
                let handles: Vec<_> = shards
                    .iter()
                    .enumerate()
                    .map(|(w, shard)| {
                        let model = &model;
                        let processed = &processed;
                        scope.spawn(move || {
                            let mut rng =
                                rng_for(seed, &format!("embed.train.e{epoch}.w{w}"));
                            run_shard(model, shard, cfg, &mut rng, processed, total_expected)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
            let (loss, pairs) = results
                .iter()
                .fold((0.0, 0u64), |(l, p), r| (l + r.loss, p + r.pairs));
            stats.epoch_loss.push(loss / pairs.max(1) as f64);
            stats.pairs_trained += pairs;
        }
    }
    Ok((model, stats))
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

const SUBWORD_MAGIC: &[u8] = b"ELIGSW1\n";

#[derive(Serialize, Deserialize)]
struct SubwordHeader {
    dim: usize,
    min_n: usize,
    max_n: usize,
    buckets: usize,
    seed: u64,
    vocab_len: usize,
    slot_buckets: Vec<u64>,
}

/// Path of the binary sidecar holding raw word vectors and trained bucket
/// slots for a subword model.
pub fn subword_sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".subwords");
    std::path::PathBuf::from(os)
}

impl EmbeddingModel {
    /// Writes the text vector format: header `V D`, then one
    /// `word v1 ... vD` line per word (represented vectors, so the file is
    /// directly usable by external tooling). Subword models additionally
    /// write a binary sidecar next to `path` so that `load` restores
    /// out-of-vocabulary composition exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::io(path, e);
        writeln!(w, "{} {}", self.vocab.len(), self.dim).map_err(io_err)?;
        for i in 0..self.vocab.len() {
            write!(w, "{}", self.vocab.word(i)).map_err(io_err)?;
            for v in self.represented(i) {
                write!(w, " {v}").map_err(io_err)?;
            }
            writeln!(w).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;

        if let Some(sw) = &self.subword {
            let sc_path = subword_sidecar_path(path);
            let file = std::fs::File::create(&sc_path).map_err(|e| Error::io(&sc_path, e))?;
            let mut w = BufWriter::new(file);
            let io_err = |e: std::io::Error| Error::io(&sc_path, e);
            let header = SubwordHeader {
                dim: self.dim,
                min_n: sw.min_n,
                max_n: sw.max_n,
                buckets: sw.buckets,
                seed: sw.seed,
                vocab_len: self.vocab.len(),
                slot_buckets: sw.slot_buckets.clone(),
            };
            w.write_all(SUBWORD_MAGIC).map_err(io_err)?;
            serde_json::to_writer(&mut w, &header).map_err(|e| Error::Schema(e.to_string()))?;
            w.write_all(b"\n").map_err(io_err)?;
            for cell in self.input.iter().chain(sw.vecs.iter()) {
                w.write_all(&cell.get().to_le_bytes()).map_err(io_err)?;
            }
            w.flush().map_err(io_err)?;
        }
        Ok(())
    }

    /// Loads a model saved by [`save`]. Without a sidecar the result is a
    /// plain-mode inference model over the file's vectors.
    pub fn load(path: &Path) -> Result<EmbeddingModel> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let bad = |line: usize, message: String| Error::Format {
            path: path.to_path_buf(),
            line,
            message,
        };
        let header = lines
            .next()
            .ok_or_else(|| bad(1, "empty vector file".into()))?
            .map_err(|e| Error::io(path, e))?;
        let mut parts = header.split_whitespace();
        let v: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(1, format!("bad header {header:?}: expected `V D`")))?;
        let d: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(1, format!("bad header {header:?}: expected `V D`")))?;
        let mut words = Vec::with_capacity(v);
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(v);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap_or_default().to_string();
            let vals: std::result::Result<Vec<f64>, _> = parts.map(str::parse).collect();
            let vals = vals.map_err(|e| bad(i + 2, format!("bad float: {e}")))?;
            if vals.len() != d {
                return Err(bad(
                    i + 2,
                    format!("row has {} values, header says {d}", vals.len()),
                ));
            }
            words.push(word);
            vectors.push(vals);
        }
        if words.len() != v {
            return Err(bad(1, format!("header says {v} rows, file has {}", words.len())));
        }
        let mut model = EmbeddingModel::from_vectors(words, vectors)?;
        if model.dim != d {
            return Err(bad(1, "dimension mismatch".into()));
        }

        let sc_path = subword_sidecar_path(path);
        if sc_path.exists() {
            model.restore_subwords(&sc_path)?;
        }
        Ok(model)
    }

    fn restore_subwords(&mut self, sc_path: &Path) -> Result<()> {
        let mut r = BufReader::new(
            std::fs::File::open(sc_path).map_err(|e| Error::io(sc_path, e))?,
        );
        let io_err = |e: std::io::Error| Error::io(sc_path, e);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if magic != SUBWORD_MAGIC {
            return Err(Error::Format {
                path: sc_path.to_path_buf(),
                line: 1,
                message: "bad sidecar magic".into(),
            });
        }
        let mut header_line = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            r.read_exact(&mut byte).map_err(io_err)?;
            if byte[0] == b'\n' {
                break;
            }
            header_line.push(byte[0]);
        }
        let header: SubwordHeader = serde_json::from_slice(&header_line)
            .map_err(|e| Error::Schema(format!("bad sidecar header: {e}")))?;
        if header.vocab_len != self.vocab.len() || header.dim != self.dim {
            return Err(Error::Schema(format!(
                "sidecar shape {}x{} does not match model {}x{}",
                header.vocab_len,
                header.dim,
                self.vocab.len(),
                self.dim
            )));
        }
        let mut read_matrix = |cells: usize| -> Result<Vec<Real>> {
            let mut buf = vec![0u8; cells * 8];
            r.read_exact(&mut buf).map_err(io_err)?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| Real::new(f64::from_le_bytes(c.try_into().unwrap())))
                .collect())
        };
        self.input = read_matrix(header.vocab_len * header.dim)?;
        let vecs = read_matrix(header.slot_buckets.len() * header.dim)?;
        let slot_of: HashMap<u64, u32> = header
            .slot_buckets
            .iter()
            .enumerate()
            .map(|(s, &b)| (b, s as u32))
            .collect();
        let word_slots = self
            .vocab
            .words()
            .iter()
            .map(|w| {
                ngram_buckets(w, header.min_n, header.max_n, header.buckets)
                    .into_iter()
                    .map(|b| {
                        slot_of.get(&b).copied().ok_or_else(|| {
                            Error::Schema(format!(
                                "sidecar is missing bucket {b} required by word {w:?}"
                            ))
                        })
                    })
                    .collect::<Result<Vec<u32>>>()
            })
            .collect::<Result<Vec<Vec<u32>>>>()?;
        self.subword = Some(SubwordTable {
            min_n: header.min_n,
            max_n: header.max_n,
            buckets: header.buckets,
            dim: header.dim,
            seed: header.seed,
            slot_of,
            slot_buckets: header.slot_buckets,
            vecs,
            word_slots,
        });
        Ok(())
    }
}
