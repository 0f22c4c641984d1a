//! Soft-label oracle.
//!
//! Every one of the `3^l` decision sequences over an extract is realized and
//! scored. The best sequence `pi*` (lexicographically smallest among ties,
//! E < A < R) fixes a path; the label at step `i` is the normalized vector of
//! mean rewards over all complete sequences that follow `pi*` for the first
//! `i - 1` steps and then take E, A or R.
//!
//! Sequences are indexed in lexicographic order: step 0 is the most
//! significant base-3 digit, with E = 0, A = 1, R = 2.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::editor::{Decision, SoftLabel};
use crate::error::{Error, Result};
use crate::rouge::{reward, RewardWeights};
use crate::summarizers::{abstract_all, Abstractor, ExtractResult, Extractor};
use crate::text::{Document, Example, ReferenceSummary, Token};

pub const DEFAULT_CAP: usize = 12;
pub const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DecisionSequence(pub Vec<Decision>);

impl DecisionSequence {
    pub fn uniform(decision: Decision, len: usize) -> DecisionSequence {
        DecisionSequence(vec![decision; len])
    }

    /// Sequence with lexicographic rank `index` among sequences of `len`.
    pub fn from_rank(len: usize, mut index: usize) -> DecisionSequence {
        let mut out = vec![Decision::Extract; len];
        for slot in out.iter_mut().rev() {
            *slot = Decision::ALL[index % 3];
            index /= 3;
        }
        DecisionSequence(out)
    }

    pub fn rank(&self) -> usize {
        self.0.iter().fold(0, |acc, d| acc * 3 + d.index())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.0
    }
}

impl fmt::Display for DecisionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.0 {
            write!(f, "{}", d.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for DecisionSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| {
                Decision::from_char(c)
                    .ok_or_else(|| Error::invalid("decision sequence", format!("unknown decision {c:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(DecisionSequence)
    }
}

fn pow3(exp: usize) -> usize {
    3usize.pow(exp as u32)
}

/// Rewards of all `3^l` sequences, in lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardTable {
    steps: usize,
    rewards: Vec<f64>,
}

impl RewardTable {
    pub fn new(steps: usize, rewards: Vec<f64>) -> Result<RewardTable> {
        if steps == 0 {
            return Err(Error::invalid("reward table", "no steps"));
        }
        if rewards.len() != pow3(steps) {
            return Err(Error::shape("reward table", pow3(steps), rewards.len()));
        }
        Ok(RewardTable { steps, rewards })
    }

    /// Table filled by calling `f` on each sequence in lexicographic order.
    pub fn from_fn<F: FnMut(&DecisionSequence) -> f64>(steps: usize, mut f: F) -> Result<RewardTable> {
        let rewards = (0..pow3(steps))
            .map(|i| f(&DecisionSequence::from_rank(steps, i)))
            .collect();
        RewardTable::new(steps, rewards)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn get(&self, sequence: &DecisionSequence) -> Option<f64> {
        (sequence.len() == self.steps).then(|| self.rewards[sequence.rank()])
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn iter(&self) -> impl Iterator<Item = (DecisionSequence, f64)> + '_ {
        self.rewards
            .iter()
            .enumerate()
            .map(|(i, r)| (DecisionSequence::from_rank(self.steps, i), *r))
    }

    pub fn scaled(&self, factor: f64) -> RewardTable {
        RewardTable {
            steps: self.steps,
            rewards: self.rewards.iter().map(|r| r * factor).collect(),
        }
    }
}

/// Summary produced by applying `sequence` to the extract.
pub fn realize<'a>(
    document: &'a Document,
    extract: &ExtractResult,
    abstractions: &'a [Vec<Token>],
    sequence: &DecisionSequence,
) -> Result<Vec<&'a [Token]>> {
    if abstractions.len() != extract.len() {
        return Err(Error::shape("abstractions", extract.len(), abstractions.len()));
    }
    if sequence.len() != extract.len() {
        return Err(Error::shape("decision sequence", extract.len(), sequence.len()));
    }
    let mut out = Vec::new();
    for ((&i, abs), d) in extract.order().iter().zip(abstractions).zip(sequence.decisions()) {
        match d {
            Decision::Extract => out.push(document.tokens(i)?),
            Decision::Abstract => out.push(abs.as_slice()),
            Decision::Reject => {}
        }
    }
    Ok(out)
}

/// Scores all `3^l` realized summaries with `reward_fn`.
///
/// Sequences that realize the same summary (for instance when an
/// abstraction equals its source sentence) are scored once.
pub fn enumerate_rewards<F>(
    example: &Example,
    extract: &ExtractResult,
    abstractions: &[Vec<Token>],
    reward_fn: F,
    cap: usize,
) -> Result<RewardTable>
where
    F: Fn(&[&[Token]], &ReferenceSummary) -> f64,
{
    let steps = extract.len();
    if steps > cap {
        return Err(Error::CapExceeded { len: steps, cap });
    }
    if steps == 0 {
        return Err(Error::invalid("extract", "empty selection"));
    }
    if abstractions.len() != steps {
        return Err(Error::shape("abstractions", steps, abstractions.len()));
    }
    let document = &example.document;
    extract.validate(document.len())?;

    // versions[i] = [extracted, abstracted] as (interned id, tokens)
    let mut interned: HashMap<&[Token], u32> = HashMap::new();
    let mut versions: Vec<[(u32, &[Token]); 2]> = Vec::with_capacity(steps);
    for (&i, abs) in extract.order().iter().zip(abstractions) {
        let e = document.tokens(i)?;
        let next = interned.len() as u32;
        let e_id = *interned.entry(e).or_insert(next);
        let next = interned.len() as u32;
        let a_id = *interned.entry(abs.as_slice()).or_insert(next);
        versions.push([(e_id, e), (a_id, abs.as_slice())]);
    }

    let mut memo: HashMap<Vec<u32>, f64> = HashMap::new();
    let mut rewards = Vec::with_capacity(pow3(steps));
    let mut digits = vec![0usize; steps];
    let mut key = Vec::with_capacity(steps);
    let mut summary: Vec<&[Token]> = Vec::with_capacity(steps);
    for _ in 0..pow3(steps) {
        key.clear();
        summary.clear();
        for (v, &d) in versions.iter().zip(&digits) {
            if d < 2 {
                key.push(v[d].0);
                summary.push(v[d].1);
            }
        }
        let r = match memo.get(&key) {
            Some(r) => *r,
            None => {
                let r = reward_fn(&summary, &example.reference);
                memo.insert(key.clone(), r);
                r
            }
        };
        rewards.push(r);
        // odometer increment, last step fastest
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < 3 {
                break;
            }
            *d = 0;
        }
    }
    RewardTable::new(steps, rewards)
}

/// Highest-reward sequence; ties go to the lexicographically smallest.
pub fn best_sequence(table: &RewardTable) -> DecisionSequence {
    let mut best = 0;
    for (i, r) in table.rewards.iter().enumerate() {
        if *r > table.rewards[best] {
            best = i;
        }
    }
    DecisionSequence::from_rank(table.steps, best)
}

/// Per-step soft labels conditioned on the prefix of `best`.
///
/// One pass over the table accumulates each reward into every prefix bucket
/// it belongs to; a sequence leaves the `pi*` path at its first deviation.
pub fn soft_labels(table: &RewardTable, best: &DecisionSequence) -> Result<Vec<SoftLabel>> {
    let steps = table.steps;
    if best.len() != steps {
        return Err(Error::shape("best sequence", steps, best.len()));
    }
    let path: Vec<usize> = best.decisions().iter().map(|d| d.index()).collect();
    let mut sums = vec![[0.0f64; 3]; steps];
    let mut digits = vec![0usize; steps];
    for &r in &table.rewards {
        for i in 0..steps {
            sums[i][digits[i]] += r;
            if digits[i] != path[i] {
                break;
            }
        }
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < 3 {
                break;
            }
            *d = 0;
        }
    }
    Ok(sums
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let count = pow3(steps - 1 - i) as f64;
            normalize_label(s.map(|x| x / count))
        })
        .collect())
}

/// `means / sum(means)`, or uniform when the sum is zero.
pub fn normalize_label(means: [f64; 3]) -> SoftLabel {
    let total: f64 = means.iter().sum();
    if total == 0.0 {
        [1.0 / 3.0; 3]
    } else {
        means.map(|x| x / total)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub weights: RewardWeights,
    pub cap: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            weights: RewardWeights::default(),
            cap: DEFAULT_CAP,
        }
    }
}

/// Precomputed supervision for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub id: String,
    pub extract: ExtractResult,
    pub abstractions: Vec<Vec<Token>>,
    pub labels: Vec<SoftLabel>,
    pub best: DecisionSequence,
    pub best_reward: f64,
}

impl LabeledExample {
    pub fn steps(&self) -> usize {
        self.labels.len()
    }
}

/// Labels `example` with a fixed extract and abstractions.
pub fn label_with(
    example: &Example,
    extract: ExtractResult,
    abstractions: Vec<Vec<Token>>,
    config: &OracleConfig,
) -> Result<LabeledExample> {
    let weights = config.weights;
    let table = enumerate_rewards(
        example,
        &extract,
        &abstractions,
        |summary, reference| reward(summary, reference, &weights),
        config.cap,
    )?;
    let best = best_sequence(&table);
    let labels = soft_labels(&table, &best)?;
    let best_reward = table.rewards[best.rank()];
    Ok(LabeledExample {
        id: example.id().to_owned(),
        extract,
        abstractions,
        labels,
        best,
        best_reward,
    })
}

pub fn label_example(
    example: &Example,
    extractor: &dyn Extractor,
    abstractor: &dyn Abstractor,
    config: &OracleConfig,
) -> Result<LabeledExample> {
    let extract = extractor.extract(example)?;
    if extract.len() > config.cap {
        return Err(Error::CapExceeded {
            len: extract.len(),
            cap: config.cap,
        });
    }
    let abstractions = abstract_all(&example.document, &extract, abstractor)?;
    label_with(example, extract, abstractions, config)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelFailure {
    pub index: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct LabelOutcome {
    pub labeled: Vec<LabeledExample>,
    pub failures: Vec<LabelFailure>,
}

/// Labels every example on up to `workers` threads; output keeps input
/// order regardless of the worker count.
pub fn label_dataset(
    examples: &[Example],
    extractor: &dyn Extractor,
    abstractor: &dyn Abstractor,
    config: &OracleConfig,
    workers: usize,
) -> Result<LabelOutcome> {
    config.weights.validate()?;
    let run = || -> Vec<Result<LabeledExample>> {
        examples
            .par_iter()
            .map(|ex| label_example(ex, extractor, abstractor, config))
            .collect()
    };
    let results = if workers <= 1 {
        examples
            .iter()
            .map(|ex| label_example(ex, extractor, abstractor, config))
            .collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid("worker pool", e.to_string()))?
            .install(run)
    };
    let mut out = LabelOutcome::default();
    for (index, (ex, r)) in examples.iter().zip(results).enumerate() {
        match r {
            Ok(l) => out.labeled.push(l),
            Err(e) => out.failures.push(LabelFailure {
                index,
                id: ex.id().to_owned(),
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub cache_version: u32,
    pub reward_weights: [f64; 3],
    pub cap: usize,
}

impl CacheHeader {
    pub fn new(config: &OracleConfig) -> CacheHeader {
        CacheHeader {
            cache_version: CACHE_VERSION,
            reward_weights: config.weights.as_array(),
            cap: config.cap,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    id: String,
    order: Vec<usize>,
    #[serde(rename = "P")]
    likelihood: std::collections::BTreeMap<usize, f64>,
    abstractions: Vec<Vec<Token>>,
    labels: Vec<SoftLabel>,
    best: String,
    best_reward: f64,
}

impl LabeledExample {
    pub fn to_cache_line(&self) -> Result<String> {
        let line = CacheLine {
            id: self.id.clone(),
            order: self.extract.order().to_vec(),
            likelihood: self.extract.likelihoods().clone(),
            abstractions: self.abstractions.clone(),
            labels: self.labels.clone(),
            best: self.best.to_string(),
            best_reward: self.best_reward,
        };
        Ok(serde_json::to_string(&line)?)
    }

    pub fn from_cache_line(text: &str) -> Result<LabeledExample> {
        let line: CacheLine = serde_json::from_str(text)?;
        let sentences = line.likelihood.len();
        let extract = ExtractResult::new(line.order, line.likelihood, sentences)?;
        let best: DecisionSequence = line.best.parse()?;
        if best.len() != extract.len() || line.labels.len() != extract.len() || line.abstractions.len() != extract.len()
        {
            return Err(Error::Cache(format!("record {} has inconsistent step counts", line.id)));
        }
        Ok(LabeledExample {
            id: line.id,
            extract,
            abstractions: line.abstractions,
            labels: line.labels,
            best,
            best_reward: line.best_reward,
        })
    }
}

pub fn write_cache(path: &Path, header: &CacheHeader, labeled: &[LabeledExample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", serde_json::to_string(header)?).map_err(io)?;
    for l in labeled {
        writeln!(w, "{}", l.to_cache_line()?).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_cache(path: &Path) -> Result<(CacheHeader, Vec<LabeledExample>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Cache(format!("{}: missing header", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: CacheHeader =
        serde_json::from_str(&header_line).map_err(|e| Error::Cache(format!("{}: bad header: {e}", path.display())))?;
    if header.cache_version != CACHE_VERSION {
        return Err(Error::Cache(format!(
            "unsupported cache version {}",
            header.cache_version
        )));
    }
    let mut labeled = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        labeled.push(LabeledExample::from_cache_line(&line).map_err(|e| Error::Record {
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok((header, labeled))
}
