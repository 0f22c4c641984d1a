//! ROUGE-N / ROUGE-L F-measures and the weighted composite reward.
//!
//! N-grams never cross sentence boundaries. Multiple reference sentences are
//! pooled into one clipped n-gram multiset. ROUGE-L is the summary-level
//! variant: for each reference sentence, the LCS hits against every
//! candidate sentence are unioned.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{ReferenceSummary, Token};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub const ZERO: RougeScore = RougeScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    pub fn from_pr(precision: f64, recall: f64) -> RougeScore {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore { precision, recall, f1 }
    }
}

/// Weights of the composite reward `alpha*R1 + beta*R2 + gamma*RL`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha: 0.4,
            beta: 1.0,
            gamma: 0.5,
        }
    }
}

impl RewardWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<RewardWeights> {
        let w = RewardWeights { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(
                "reward weights",
                "weights must be finite and non-negative",
            ));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::invalid("reward weights", "at least one weight must be positive"));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.alpha + self.beta + self.gamma
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}

fn ngram_counts<S: AsRef<[Token]>>(sentences: &[S], n: usize) -> (HashMap<&[Token], usize>, usize) {
    let mut counts = HashMap::new();
    let mut total = 0;
    for s in sentences {
        let s = s.as_ref();
        if s.len() < n {
            continue;
        }
        for gram in s.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
            total += 1;
        }
    }
    (counts, total)
}

/// ROUGE-N of a multi-sentence candidate against pooled reference sentences.
pub fn rouge_n_sentences<C, R>(candidate: &[C], reference: &[R], n: usize) -> RougeScore
where
    C: AsRef<[Token]>,
    R: AsRef<[Token]>,
{
    assert!(n >= 1, "rouge_n requires n >= 1");
    let (cand, cand_total) = ngram_counts(candidate, n);
    let (refs, ref_total) = ngram_counts(reference, n);
    if cand_total == 0 || ref_total == 0 {
        return RougeScore::ZERO;
    }
    let overlap: usize = cand
        .iter()
        .map(|(gram, &c)| refs.get(gram).map_or(0, |&r| c.min(r)))
        .sum();
    RougeScore::from_pr(overlap as f64 / cand_total as f64, overlap as f64 / ref_total as f64)
}

/// ROUGE-N of a single candidate token sequence.
pub fn rouge_n<R: AsRef<[Token]>>(candidate: &[Token], reference: &[R], n: usize) -> RougeScore {
    rouge_n_sentences(&[candidate], reference, n)
}

/// Marks the reference positions of one LCS between `reference` and
/// `candidate`. Backtracking prefers a diagonal match, then moving up in the
/// reference, then left in the candidate.
fn mark_lcs(reference: &[Token], candidate: &[Token], hits: &mut [bool]) {
    let (r, c) = (reference.len(), candidate.len());
    if r == 0 || c == 0 {
        return;
    }
    let width = c + 1;
    let mut table = vec![0u32; (r + 1) * width];
    for i in 1..=r {
        for j in 1..=c {
            table[i * width + j] = if reference[i - 1] == candidate[j - 1] {
                table[(i - 1) * width + j - 1] + 1
            } else {
                table[(i - 1) * width + j].max(table[i * width + j - 1])
            };
        }
    }
    let (mut i, mut j) = (r, c);
    while i > 0 && j > 0 {
        if reference[i - 1] == candidate[j - 1] {
            hits[i - 1] = true;
            i -= 1;
            j -= 1;
        } else if table[(i - 1) * width + j] >= table[i * width + j - 1] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
}

/// Length of the longest common subsequence of two token sequences.
pub fn lcs_len(a: &[Token], b: &[Token]) -> usize {
    let mut hits = vec![false; a.len()];
    mark_lcs(a, b, &mut hits);
    hits.iter().filter(|h| **h).count()
}

/// Summary-level ROUGE-L with per-reference-sentence union LCS.
pub fn rouge_l<C, R>(candidate: &[C], reference: &[R]) -> RougeScore
where
    C: AsRef<[Token]>,
    R: AsRef<[Token]>,
{
    let cand_total: usize = candidate.iter().map(|s| s.as_ref().len()).sum();
    let ref_total: usize = reference.iter().map(|s| s.as_ref().len()).sum();
    if cand_total == 0 || ref_total == 0 {
        return RougeScore::ZERO;
    }
    // a hit consumes one unit of the token's pooled count on both sides, so
    // a candidate token matching several reference sentences counts once
    let mut budget: HashMap<&Token, (usize, usize)> = HashMap::new();
    for t in candidate.iter().flat_map(|s| s.as_ref()) {
        budget.entry(t).or_default().0 += 1;
    }
    for t in reference.iter().flat_map(|s| s.as_ref()) {
        budget.entry(t).or_default().1 += 1;
    }
    let mut union = 0usize;
    for r in reference {
        let r = r.as_ref();
        let mut hits = vec![false; r.len()];
        for c in candidate {
            mark_lcs(r, c.as_ref(), &mut hits);
        }
        for (t, _) in r.iter().zip(&hits).filter(|(_, h)| **h) {
            let b = budget.get_mut(t).expect("hit token is in both pools");
            if b.0 > 0 && b.1 > 0 {
                b.0 -= 1;
                b.1 -= 1;
                union += 1;
            }
        }
    }
    RougeScore::from_pr(union as f64 / cand_total as f64, union as f64 / ref_total as f64)
}

/// The three F-measures reported for a summary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeTriple {
    pub rouge_1: RougeScore,
    pub rouge_2: RougeScore,
    pub rouge_l: RougeScore,
}

pub fn rouge_triple<C: AsRef<[Token]>>(candidate: &[C], reference: &ReferenceSummary) -> RougeTriple {
    RougeTriple {
        rouge_1: rouge_n_sentences(candidate, reference.sentences(), 1),
        rouge_2: rouge_n_sentences(candidate, reference.sentences(), 2),
        rouge_l: rouge_l(candidate, reference.sentences()),
    }
}

/// `alpha*R1.f1 + beta*R2.f1 + gamma*RL.f1` over the same pair.
pub fn reward<C: AsRef<[Token]>>(candidate: &[C], reference: &ReferenceSummary, weights: &RewardWeights) -> f64 {
    let t = rouge_triple(candidate, reference);
    weights.alpha * t.rouge_1.f1 + weights.beta * t.rouge_2.f1 + weights.gamma * t.rouge_l.f1
}
