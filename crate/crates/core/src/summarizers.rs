//! Extractor and abstractor interfaces with deterministic defaults.
//!
//! The abstractor works on a chunk of up to three consecutive sentences
//! centred on the extracted one. Word attention is biased by the
//! extractor's selection likelihoods: `C'(w) = C(w) * P(s) / Z` where `s` is
//! the sentence holding `w` and `Z` sums `C * P` over the whole chunk.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rouge::{reward, RewardWeights};
use crate::text::{Document, Example, Token};

/// Floor assigned to sentences the greedy oracle extractor never selects.
pub const UNSELECTED_LIKELIHOOD: f64 = 1e-6;

/// Content score given to stopwords by the salience abstractor.
pub const STOPWORD_SCORE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractResult {
    order: Vec<usize>,
    likelihood: BTreeMap<usize, f64>,
}

impl ExtractResult {
    /// Validates that `order` is non-empty with distinct in-range entries and
    /// that every sentence of the document has a likelihood in `(0, 1]`.
    pub fn new(order: Vec<usize>, likelihood: BTreeMap<usize, f64>, sentences: usize) -> Result<ExtractResult> {
        let r = ExtractResult { order, likelihood };
        r.validate(sentences)?;
        Ok(r)
    }

    pub fn validate(&self, sentences: usize) -> Result<()> {
        if self.order.is_empty() {
            return Err(Error::invalid("extract", "empty selection"));
        }
        let mut seen = vec![false; sentences];
        for &i in &self.order {
            if i >= sentences {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: sentences,
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid("extract", format!("sentence {i} selected twice")));
            }
        }
        for i in 0..sentences {
            match self.likelihood.get(&i) {
                Some(p) if *p > 0.0 && *p <= 1.0 => {}
                Some(p) => return Err(Error::invalid("extract", format!("P({i}) = {p} outside (0, 1]"))),
                None => return Err(Error::invalid("extract", format!("missing P({i})"))),
            }
        }
        if self.likelihood.len() != sentences {
            return Err(Error::invalid(
                "extract",
                "likelihood covers sentences outside the document",
            ));
        }
        Ok(())
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn likelihoods(&self) -> &BTreeMap<usize, f64> {
        &self.likelihood
    }

    /// `P(s)`; sentences without an entry get the unselected floor.
    pub fn likelihood(&self, sentence: usize) -> f64 {
        self.likelihood.get(&sentence).copied().unwrap_or(UNSELECTED_LIKELIHOOD)
    }
}

pub trait Extractor: Send + Sync {
    /// Selects sentences of `example.document`. Implementations must be
    /// deterministic and may consult the reference only at training time.
    fn extract(&self, example: &Example) -> Result<ExtractResult>;

    fn name(&self) -> String;
}

/// The first `k` sentences, `P(s) = 1 / (1 + position)`.
pub fn extract_lead(document: &Document, k: usize) -> Result<ExtractResult> {
    if k == 0 {
        return Err(Error::invalid("extract_lead", "k must be at least 1"));
    }
    let order = (0..k.min(document.len())).collect();
    let likelihood = (0..document.len()).map(|i| (i, 1.0 / (1.0 + i as f64))).collect();
    ExtractResult::new(order, likelihood, document.len())
}

#[derive(Clone, Copy, Debug)]
pub struct LeadExtractor {
    pub k: usize,
}

impl Extractor for LeadExtractor {
    fn extract(&self, example: &Example) -> Result<ExtractResult> {
        extract_lead(&example.document, self.k)
    }

    fn name(&self) -> String {
        format!("lead-{}", self.k)
    }
}

/// Greedy reward-maximizing selection against the reference.
///
/// Each round adds the sentence with the largest reward of the running
/// extract (lowest index on ties) and stops after `k` sentences or when no
/// candidate strictly improves the reward. Selected sentences get
/// `P = softmax(gains)` over their marginal gains; the rest get
/// [`UNSELECTED_LIKELIHOOD`].
pub fn extract_greedy_oracle(example: &Example, k: usize, weights: &RewardWeights) -> Result<ExtractResult> {
    if k == 0 {
        return Err(Error::invalid("extract_greedy_oracle", "k must be at least 1"));
    }
    let doc = &example.document;
    let mut chosen: Vec<usize> = Vec::new();
    let mut gains: Vec<f64> = Vec::new();
    let mut current = 0.0;
    while chosen.len() < k.min(doc.len()) {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..doc.len() {
            if chosen.contains(&i) {
                continue;
            }
            let mut cand: Vec<&[Token]> = chosen.iter().map(|&c| doc.sentences()[c].tokens.as_slice()).collect();
            cand.push(&doc.sentences()[i].tokens);
            let r = reward(&cand, &example.reference, weights);
            if best.is_none_or(|(_, b)| r > b) {
                best = Some((i, r));
            }
        }
        match best {
            Some((i, r)) if r > current || chosen.is_empty() => {
                chosen.push(i);
                gains.push(r - current);
                current = r;
            }
            _ => break,
        }
    }
    let max_gain = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = gains.iter().map(|g| (g - max_gain).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut likelihood: BTreeMap<usize, f64> = (0..doc.len()).map(|i| (i, UNSELECTED_LIKELIHOOD)).collect();
    for (&i, e) in chosen.iter().zip(&exps) {
        likelihood.insert(i, e / total);
    }
    ExtractResult::new(chosen, likelihood, doc.len())
}

#[derive(Clone, Copy, Debug)]
pub struct GreedyOracleExtractor {
    pub k: usize,
    pub weights: RewardWeights,
}

impl Extractor for GreedyOracleExtractor {
    fn extract(&self, example: &Example) -> Result<ExtractResult> {
        extract_greedy_oracle(example, self.k, &self.weights)
    }

    fn name(&self) -> String {
        format!("greedy-oracle-{}", self.k)
    }
}

/// Up to three consecutive sentences around an extracted one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub members: Vec<usize>,
    pub center: usize,
}

impl Chunk {
    pub fn center_sentence(&self) -> usize {
        self.members[self.center]
    }
}

pub fn make_chunk(document: &Document, i: usize) -> Result<Chunk> {
    let len = document.len();
    if i >= len {
        return Err(Error::IndexOutOfRange { index: i, len });
    }
    let lo = i.saturating_sub(1);
    let hi = (i + 1).min(len - 1);
    Ok(Chunk {
        members: (lo..=hi).collect(),
        center: i - lo,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionEntry {
    pub sentence: usize,
    pub position: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct AttentionMap {
    pub entries: Vec<AttentionEntry>,
}

impl AttentionMap {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }
}

/// `C'(w) = C(w) * P(s) / Z` with `Z = sum over the chunk of C * P`.
pub fn rescale_attention<F>(attention: &AttentionMap, likelihood: F) -> Result<AttentionMap>
where
    F: Fn(usize) -> f64,
{
    let scaled: Vec<f64> = attention
        .entries
        .iter()
        .map(|e| e.weight * likelihood(e.sentence))
        .collect();
    let z: f64 = scaled.iter().sum();
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::DegenerateAttention(z));
    }
    Ok(AttentionMap {
        entries: attention
            .entries
            .iter()
            .zip(&scaled)
            .map(|(e, s)| AttentionEntry { weight: s / z, ..*e })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbstractResult {
    pub tokens: Vec<Token>,
    pub attention: AttentionMap,
}

pub trait Abstractor: Send + Sync {
    /// Produces a non-empty rewrite of the chunk's center sentence.
    fn abstract_chunk(&self, document: &Document, chunk: &Chunk, extract: &ExtractResult) -> Result<AbstractResult>;
}

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could", "did", "do", "does",
    "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has", "have", "having", "he", "her",
    "here", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just", "me", "more",
    "most", "my", "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "out",
    "over", "own", "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "then", "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up", "very", "was",
    "we", "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would", "you",
    "your", "yours",
];

pub fn is_stopword(token: &Token) -> bool {
    STOPWORDS.binary_search(&token.as_str()).is_ok()
}

/// The built-in stopword list, sorted.
pub fn stopwords() -> &'static [&'static str] {
    STOPWORDS
}

/// Raw content scores `C(w)` over every token of the chunk:
/// `ln(1 + M / df(w))` where `M` is the chunk size and `df` the number of
/// chunk sentences containing `w`; stopwords score [`STOPWORD_SCORE`].
pub fn content_attention(document: &Document, chunk: &Chunk) -> AttentionMap {
    let members = chunk.members.len() as f64;
    let mut df: HashMap<&Token, usize> = HashMap::new();
    for &s in &chunk.members {
        let mut seen: Vec<&Token> = document.sentences()[s].tokens.iter().collect();
        seen.sort();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let mut entries = Vec::new();
    for &s in &chunk.members {
        for (position, t) in document.sentences()[s].tokens.iter().enumerate() {
            let weight = if is_stopword(t) {
                STOPWORD_SCORE
            } else {
                (1.0 + members / df[t] as f64).ln()
            };
            entries.push(AttentionEntry {
                sentence: s,
                position,
                weight,
            });
        }
    }
    AttentionMap { entries }
}

/// Salience compression of the chunk's center sentence.
///
/// Center-sentence tokens are ranked by rescaled attention (ties by
/// position) and kept until their share of the center sentence's mass
/// reaches `ratio`; the kept tokens are returned in original order.
pub fn abstract_salience<F>(document: &Document, chunk: &Chunk, likelihood: F, ratio: f64) -> Result<AbstractResult>
where
    F: Fn(usize) -> f64,
{
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid("abstractor ratio", format!("{ratio} outside (0, 1]")));
    }
    let center = chunk.center_sentence();
    let raw = content_attention(document, chunk);
    let attention = rescale_attention(&raw, likelihood)?;
    let mut ranked: Vec<(usize, f64)> = attention
        .entries
        .iter()
        .filter(|e| e.sentence == center)
        .map(|e| (e.position, e.weight))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let total: f64 = ranked.iter().map(|r| r.1).sum();
    let mut keep = Vec::new();
    let mut mass = 0.0;
    for (position, weight) in ranked {
        keep.push(position);
        mass += weight;
        if mass >= ratio * total {
            break;
        }
    }
    keep.sort_unstable();
    let tokens = &document.sentences()[center].tokens;
    Ok(AbstractResult {
        tokens: keep.into_iter().map(|p| tokens[p].clone()).collect(),
        attention,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SalienceAbstractor {
    pub ratio: f64,
}

impl Default for SalienceAbstractor {
    fn default() -> Self {
        SalienceAbstractor { ratio: 0.4 }
    }
}

impl Abstractor for SalienceAbstractor {
    fn abstract_chunk(&self, document: &Document, chunk: &Chunk, extract: &ExtractResult) -> Result<AbstractResult> {
        abstract_salience(document, chunk, |s| extract.likelihood(s), self.ratio)
    }
}

/// Abstractions of every extracted sentence, in selection order.
pub fn abstract_all(
    document: &Document,
    extract: &ExtractResult,
    abstractor: &dyn Abstractor,
) -> Result<Vec<Vec<Token>>> {
    extract
        .order()
        .iter()
        .map(|&i| {
            let chunk = make_chunk(document, i)?;
            let out = abstractor.abstract_chunk(document, &chunk, extract)?;
            if out.tokens.is_empty() {
                return Err(Error::invalid("abstraction", format!("empty rewrite of sentence {i}")));
            }
            Ok(out.tokens)
        })
        .collect()
}
