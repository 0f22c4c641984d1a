//! Deterministic sentence encoder and the document representation.
//!
//! Each sentence is a signed feature-hashed bag of unigrams and bigrams,
//! L2-normalized, then averaged with its `context_window` neighbours on each
//! side and normalized again. Abstracted sentences are encoded by splicing
//! them into the document at the original position, so neighbour mixing
//! treats both versions alike.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normalize, Matrix};
use crate::text::{Document, Token};

pub const DEFAULT_WIDTH: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub n: usize,
    pub hash_seed: u64,
    pub context_window: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            n: DEFAULT_WIDTH,
            hash_seed: 0x5eed,
            context_window: 1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("encoder config", "n must be at least 1"));
        }
        Ok(())
    }
}

/// Sentence representation of width `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceVec(pub Vec<f64>);

impl SentenceVec {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Document representation, every entry in `(-1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DocVec(pub Vec<f64>);

impl DocVec {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Parameters of the document projection `d = tanh(W_d * mean(e) + b_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocParams {
    pub w_d: Matrix,
    pub b_d: Vec<f64>,
}

impl DocParams {
    pub fn zeros(n: usize) -> DocParams {
        DocParams {
            w_d: Matrix::zeros(n, n),
            b_d: vec![0.0; n],
        }
    }

    pub fn init<R: Rng>(n: usize, rng: &mut R) -> DocParams {
        DocParams {
            w_d: Matrix::uniform(n, n, 1.0 / (n as f64).sqrt(), rng),
            b_d: vec![0.0; n],
        }
    }

    pub fn width(&self) -> usize {
        self.b_d.len()
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.w_d.shape() != (n, n) {
            return Err(Error::shape(
                "W_d",
                format!("{n}x{n}"),
                format!("{:?}", self.w_d.shape()),
            ));
        }
        if self.b_d.len() != n {
            return Err(Error::shape("b_d", n, self.b_d.len()));
        }
        Ok(())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

// splitmix64 finalizer; FNV alone has weak high bits.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn feature_hash(seed: u64, parts: &[&str]) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
    h = fnv1a(h, &[parts.len() as u8]);
    for p in parts {
        h = fnv1a(h, p.as_bytes());
        h = fnv1a(h, &[0x1f]);
    }
    mix(h)
}

fn add_feature(v: &mut [f64], seed: u64, parts: &[&str]) {
    let h = feature_hash(seed, parts);
    let bucket = (h % v.len() as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    v[bucket] += sign;
}

/// Normalized hashed unigram+bigram vector of one sentence, before mixing.
pub fn hashed_features(tokens: &[Token], config: &EncoderConfig) -> Vec<f64> {
    let mut v = vec![0.0; config.n];
    for t in tokens {
        add_feature(&mut v, config.hash_seed, &[t.as_str()]);
    }
    for pair in tokens.windows(2) {
        add_feature(&mut v, config.hash_seed, &[pair[0].as_str(), pair[1].as_str()]);
    }
    normalize(&mut v);
    v
}

/// Mean of `pre[i - w ..= i + w]` (clipped to the document), normalized.
fn mix_at<'a, F>(i: usize, len: usize, window: usize, n: usize, pre: F) -> SentenceVec
where
    F: Fn(usize) -> &'a [f64],
{
    let lo = i.saturating_sub(window);
    let hi = (i + window).min(len - 1);
    let mut acc = vec![0.0; n];
    for j in lo..=hi {
        for (a, x) in acc.iter_mut().zip(pre(j)) {
            *a += x;
        }
    }
    let count = (hi - lo + 1) as f64;
    for a in acc.iter_mut() {
        *a /= count;
    }
    normalize(&mut acc);
    SentenceVec(acc)
}

pub fn encode_sentences(document: &Document, config: &EncoderConfig) -> Vec<SentenceVec> {
    let pre: Vec<Vec<f64>> = document
        .sentences()
        .iter()
        .map(|s| hashed_features(&s.tokens, config))
        .collect();
    let len = pre.len();
    (0..len)
        .map(|i| mix_at(i, len, config.context_window, config.n, |j| &pre[j]))
        .collect()
}

/// Encodes `abstracted` as if it replaced sentence `index` of `document`.
/// Only the neighbourhood of `index` is re-hashed; the result is identical to
/// a full re-encode of the modified document read at `index`.
pub fn encode_abstracted(
    document: &Document,
    index: usize,
    abstracted: &[Token],
    config: &EncoderConfig,
) -> Result<SentenceVec> {
    let len = document.len();
    if index >= len {
        return Err(Error::IndexOutOfRange { index, len });
    }
    if abstracted.is_empty() {
        return Err(Error::invalid("abstracted sentence", "empty"));
    }
    let lo = index.saturating_sub(config.context_window);
    let hi = (index + config.context_window).min(len - 1);
    let pre: Vec<Vec<f64>> = (lo..=hi)
        .map(|j| {
            let tokens = if j == index {
                abstracted
            } else {
                &document.sentences()[j].tokens
            };
            hashed_features(tokens, config)
        })
        .collect();
    Ok(mix_at(index, len, config.context_window, config.n, |j| &pre[j - lo]))
}

/// Arithmetic mean of the sentence vectors.
pub fn mean_vector(vecs: &[SentenceVec]) -> Result<Vec<f64>> {
    let first = vecs
        .first()
        .ok_or_else(|| Error::invalid("document representation", "no sentences"))?;
    let n = first.0.len();
    let mut mean = vec![0.0; n];
    for v in vecs {
        if v.0.len() != n {
            return Err(Error::shape("sentence vector", n, v.0.len()));
        }
        for (m, x) in mean.iter_mut().zip(&v.0) {
            *m += x;
        }
    }
    let count = vecs.len() as f64;
    for m in mean.iter_mut() {
        *m /= count;
    }
    Ok(mean)
}

/// `tanh(W_d * mean + b_d)` for a precomputed mean vector.
pub fn project_document(mean: &[f64], params: &DocParams) -> Result<DocVec> {
    params.check(mean.len())?;
    let mut d = params.w_d.matvec(mean);
    for (x, b) in d.iter_mut().zip(&params.b_d) {
        *x = (*x + b).tanh();
    }
    Ok(DocVec(d))
}

pub fn doc_representation(sentence_vecs: &[SentenceVec], params: &DocParams) -> Result<DocVec> {
    project_document(&mean_vector(sentence_vecs)?, params)
}
