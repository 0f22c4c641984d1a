//! Synthetic corpus with a known editing optimum.
//!
//! Each document holds `clean` sentences copied into the reference, one
//! sentence padded with stopwords whose salience compression is what the
//! reference contains, and a closing verbatim repeat of one earlier clean
//! sentence. Every sentence ends with ".". Under the lead extractor over
//! the whole document the intended decisions are E for clean sentences, A
//! for the padded sentence and R for the repeat.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::editor::Decision;
use crate::error::{Error, Result};
use crate::summarizers::{extract_lead, is_stopword, make_chunk, Abstractor};
use crate::text::{Document, Example, ReferenceSummary, Token};

const SYLLABLES: &[&str] = &[
    "ba", "ko", "ri", "me", "tu", "sa", "ne", "lo", "vi", "da", "pe", "mu", "zo", "ki", "ra", "fe", "go", "li",
];

const PADDING: &[&str] = &["the", "of", "and", "to"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub examples: usize,
    /// Reference-matching sentences per document.
    pub clean: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Stopwords inserted into the padded sentence.
    pub padding: usize,
    pub vocabulary: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            examples: 3000,
            clean: 3,
            min_words: 5,
            max_words: 8,
            padding: 5,
            vocabulary: 2000,
            seed: 17,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clean == 0 {
            return Err(Error::invalid("synth config", "need at least one clean sentence"));
        }
        if self.min_words < 2 || self.min_words > self.max_words {
            return Err(Error::invalid("synth config", "need 2 <= min_words <= max_words"));
        }
        if self.vocabulary < (self.clean + 1) * self.max_words {
            return Err(Error::invalid("synth config", "vocabulary too small for one document"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthExample {
    pub example: Example,
    /// Decision per sentence, in document order.
    pub intended: Vec<Decision>,
}

fn vocabulary(size: usize, rng: &mut ChaCha8Rng) -> Vec<Token> {
    let mut words = std::collections::BTreeSet::new();
    while words.len() < size {
        let syllables = rng.gen_range(2..=4);
        let w: String = (0..syllables).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        words.insert(w);
    }
    let mut out: Vec<Token> = words
        .into_iter()
        .filter_map(|w| Token::new(&w))
        .filter(|t| !is_stopword(t))
        .collect();
    out.shuffle(rng);
    out
}

pub fn generate(config: &SynthConfig, abstractor: &dyn Abstractor) -> Result<Vec<SynthExample>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let vocab = vocabulary(config.vocabulary, &mut rng);
    let padding: Vec<Token> = PADDING.iter().filter_map(|w| Token::new(w)).collect();
    (0..config.examples)
        .map(|i| generate_one(&format!("synth-{i:05}"), config, &vocab, &padding, &mut rng, abstractor))
        .collect()
}

fn generate_one(
    id: &str,
    config: &SynthConfig,
    vocab: &[Token],
    padding: &[Token],
    rng: &mut ChaCha8Rng,
    abstractor: &dyn Abstractor,
) -> Result<SynthExample> {
    // words are drawn without replacement so sentences share no content
    let mut words = vocab
        .choose_multiple(rng, (config.clean + 1) * config.max_words)
        .cloned();
    let stop = Token::new(".").expect("non-empty");
    let mut sentence = |rng: &mut ChaCha8Rng| -> Vec<Token> {
        let len = rng.gen_range(config.min_words..=config.max_words);
        words.by_ref().take(len).collect()
    };
    let clean: Vec<Vec<Token>> = (0..config.clean).map(|_| sentence(rng)).collect();
    let mut padded = sentence(rng);
    for _ in 0..config.padding {
        let at = rng.gen_range(0..=padded.len());
        padded.insert(at, padding.choose(rng).unwrap().clone());
    }

    let mut sentences: Vec<(Vec<Token>, Decision)> = clean.iter().map(|s| (s.clone(), Decision::Extract)).collect();
    let padded_at = rng.gen_range(0..=sentences.len());
    sentences.insert(padded_at, (padded, Decision::Abstract));
    let repeated = clean.choose(rng).unwrap().clone();
    sentences.push((repeated, Decision::Reject));
    for s in &mut sentences {
        s.0.push(stop.clone());
    }

    let intended: Vec<Decision> = sentences.iter().map(|s| s.1).collect();
    let document = Document::new(id, sentences.into_iter().map(|s| s.0).collect())?;
    let extract = extract_lead(&document, document.len())?;
    let chunk = make_chunk(&document, padded_at)?;
    let compressed = abstractor.abstract_chunk(&document, &chunk, &extract)?.tokens;

    let reference = intended
        .iter()
        .enumerate()
        .filter_map(|(i, d)| match d {
            Decision::Extract => Some(document.sentences()[i].tokens.clone()),
            Decision::Abstract => Some(compressed.clone()),
            Decision::Reject => None,
        })
        .collect();
    Ok(SynthExample {
        example: Example {
            document,
            reference: ReferenceSummary::new(reference)?,
        },
        intended,
    })
}
