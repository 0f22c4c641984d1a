//! The editorial network.
//!
//! For each extracted sentence, in selection order, the editor sees the
//! extracted version `e`, the abstracted version `a`, the running summary
//! state `g` and the document vector `d`, and scores the three decisions
//!
//! ```text
//! p = softmax(V tanh(W_c [e, a, g, d] + b_c) + b)
//! ```
//!
//! The highest-scoring decision is applied and the state advances by
//! `g += tanh(W_g h)` with `h` the kept version (zero on reject).

mod checkpoint;
mod grad;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use grad::{accumulate_gradients, gradients, loss_and_gradients};
pub use params::{EditorParams, DEFAULT_HIDDEN, TENSOR_NAMES};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::encoder::{encode_abstracted, encode_sentences, mean_vector, project_document, EncoderConfig, SentenceVec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::summarizers::{abstract_all, Abstractor, ExtractResult};
use crate::text::{Document, Token};

/// Soft label over `[E, A, R]`.
pub type SoftLabel = [f64; 3];

/// Lower clamp applied to probabilities inside the loss logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Decision {
    /// Keep the extracted sentence.
    Extract,
    /// Use the abstracted rewrite.
    Abstract,
    /// Drop the sentence.
    Reject,
}

impl Decision {
    /// Tie-break order: earlier wins.
    pub const ALL: [Decision; 3] = [Decision::Extract, Decision::Abstract, Decision::Reject];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Decision> {
        Decision::ALL.get(i).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            Decision::Extract => 'E',
            Decision::Abstract => 'A',
            Decision::Reject => 'R',
        }
    }

    pub fn from_char(c: char) -> Option<Decision> {
        match c {
            'E' => Some(Decision::Extract),
            'A' => Some(Decision::Abstract),
            'R' => Some(Decision::Reject),
            _ => None,
        }
    }

    /// Index of the largest score, ties resolved E > A > R.
    pub fn argmax(scores: &[f64; 3]) -> Decision {
        let mut best = 0;
        for i in 1..3 {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        Decision::ALL[best]
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Inputs of a single decision step.
#[derive(Clone, Copy, Debug)]
pub struct StepInput<'a> {
    pub e: &'a [f64],
    pub a: &'a [f64],
    pub g_prev: &'a [f64],
    pub d: &'a [f64],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionDistribution {
    pub probs: [f64; 3],
}

impl DecisionDistribution {
    pub fn uniform() -> DecisionDistribution {
        DecisionDistribution { probs: [1.0 / 3.0; 3] }
    }

    pub fn p(&self, decision: Decision) -> f64 {
        self.probs[decision.index()]
    }

    pub fn decision(&self) -> Decision {
        Decision::argmax(&self.probs)
    }
}

pub(crate) fn softmax(logits: [f64; 3]) -> [f64; 3] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|o| (o - max).exp());
    let total: f64 = exps.iter().sum();
    exps.map(|x| x / total)
}

/// Hidden activations and probabilities for `x = [e, a, g, d]`.
pub(crate) fn score(params: &EditorParams, x: &[f64]) -> (Vec<f64>, [f64; 3]) {
    let mut hidden = params.w_c.matvec(x);
    for (h, b) in hidden.iter_mut().zip(&params.b_c) {
        *h = (*h + b).tanh();
    }
    let out = params.v.matvec(&hidden);
    let logits = [out[0] + params.b[0], out[1] + params.b[1], out[2] + params.b[2]];
    (hidden, softmax(logits))
}

pub(crate) fn concat(parts: [&[f64]; 4]) -> Vec<f64> {
    let mut x = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        x.extend_from_slice(p);
    }
    x
}

pub fn decision_distribution(input: &StepInput<'_>, params: &EditorParams) -> Result<DecisionDistribution> {
    params.check()?;
    let n = params.n;
    for (name, v) in [("e", input.e), ("a", input.a), ("g", input.g_prev), ("d", input.d)] {
        if v.len() != n {
            return Err(Error::shape(name, n, v.len()));
        }
    }
    let x = concat([input.e, input.a, input.g_prev, input.d]);
    Ok(DecisionDistribution {
        probs: score(params, &x).1,
    })
}

/// `tanh(W_g h)`
pub(crate) fn state_increment(w_g: &Matrix, h: &[f64]) -> Vec<f64> {
    w_g.matvec(h).into_iter().map(f64::tanh).collect()
}

/// `g_prev + tanh(W_g h)` with `h` picked by `decision`; reject returns
/// `g_prev` unchanged.
pub fn update_state(g_prev: &[f64], decision: Decision, e: &[f64], a: &[f64], w_g: &Matrix) -> Result<Vec<f64>> {
    let n = g_prev.len();
    if w_g.shape() != (n, n) {
        return Err(Error::shape("W_g", format!("{n}x{n}"), format!("{:?}", w_g.shape())));
    }
    if e.len() != n || a.len() != n {
        return Err(Error::shape("sentence vector", n, e.len().max(a.len())));
    }
    let h = match decision {
        Decision::Extract => e,
        Decision::Abstract => a,
        Decision::Reject => return Ok(g_prev.to_vec()),
    };
    Ok(g_prev.iter().zip(state_increment(w_g, h)).map(|(g, t)| g + t).collect())
}

/// Frozen encoder outputs needed to run the editor over one extract.
#[derive(Clone, Debug, PartialEq)]
pub struct EditorInputs {
    /// Mean of all document sentence vectors.
    pub mean: Vec<f64>,
    pub extracted: Vec<SentenceVec>,
    pub abstracted: Vec<SentenceVec>,
}

impl EditorInputs {
    pub fn len(&self) -> usize {
        self.extracted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.extracted.is_empty()
    }
}

pub fn prepare_inputs(
    document: &Document,
    extract: &ExtractResult,
    abstractions: &[Vec<Token>],
    config: &EncoderConfig,
) -> Result<EditorInputs> {
    config.validate()?;
    extract.validate(document.len())?;
    if abstractions.len() != extract.len() {
        return Err(Error::shape("abstractions", extract.len(), abstractions.len()));
    }
    let all = encode_sentences(document, config);
    let mean = mean_vector(&all)?;
    let extracted = extract.order().iter().map(|&i| all[i].clone()).collect();
    let abstracted = extract
        .order()
        .iter()
        .zip(abstractions)
        .map(|(&i, toks)| encode_abstracted(document, i, toks, config))
        .collect::<Result<_>>()?;
    Ok(EditorInputs {
        mean,
        extracted,
        abstracted,
    })
}

pub(crate) struct StepTrace {
    pub x: Vec<f64>,
    pub hidden: Vec<f64>,
    pub probs: [f64; 3],
    pub decision: Decision,
    /// `tanh(W_g h)`, absent for reject.
    pub increment: Option<Vec<f64>>,
}

pub(crate) struct Trace {
    pub d: Vec<f64>,
    pub steps: Vec<StepTrace>,
    pub final_state: Vec<f64>,
}

/// Runs the editor over prepared inputs. With `teacher` set, the state
/// follows the given decisions instead of the model's own.
pub(crate) fn forward(inputs: &EditorInputs, params: &EditorParams, teacher: Option<&[Decision]>) -> Result<Trace> {
    params.check()?;
    let n = params.n;
    if inputs.mean.len() != n {
        return Err(Error::shape("encoder width", n, inputs.mean.len()));
    }
    if inputs.abstracted.len() != inputs.len() {
        return Err(Error::shape(
            "abstracted vectors",
            inputs.len(),
            inputs.abstracted.len(),
        ));
    }
    if let Some(t) = teacher {
        if t.len() != inputs.len() {
            return Err(Error::shape("teacher decisions", inputs.len(), t.len()));
        }
    }
    let d = project_document(&inputs.mean, &params.doc)?.0;
    let mut g = vec![0.0; n];
    let mut steps = Vec::with_capacity(inputs.len());
    for (i, (e, a)) in inputs.extracted.iter().zip(&inputs.abstracted).enumerate() {
        let x = concat([&e.0, &a.0, &g, &d]);
        let (hidden, probs) = score(params, &x);
        let decision = teacher.map_or_else(|| Decision::argmax(&probs), |t| t[i]);
        let increment = match decision {
            Decision::Extract => Some(state_increment(&params.w_g, &e.0)),
            Decision::Abstract => Some(state_increment(&params.w_g, &a.0)),
            Decision::Reject => None,
        };
        if let Some(inc) = &increment {
            for (gv, t) in g.iter_mut().zip(inc) {
                *gv += t;
            }
        }
        steps.push(StepTrace {
            x,
            hidden,
            probs,
            decision,
            increment,
        });
    }
    Ok(Trace {
        d,
        steps,
        final_state: g,
    })
}

/// Free-running decisions over prepared inputs.
pub fn decode_decisions(inputs: &EditorInputs, params: &EditorParams) -> Result<Vec<Decision>> {
    Ok(forward(inputs, params, None)?
        .steps
        .iter()
        .map(|s| s.decision)
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EditStep {
    pub sentence: usize,
    pub decision: Decision,
    pub distribution: DecisionDistribution,
    pub extracted: Vec<Token>,
    pub abstracted: Vec<Token>,
}

impl EditStep {
    /// The sentence version appended to the summary, if any.
    pub fn emitted(&self) -> Option<&[Token]> {
        match self.decision {
            Decision::Extract => Some(&self.extracted),
            Decision::Abstract => Some(&self.abstracted),
            Decision::Reject => None,
        }
    }
}

/// Output of the editor: one step per extracted sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedSummary {
    pub steps: Vec<EditStep>,
    pub final_state: Vec<f64>,
}

impl MixedSummary {
    pub fn text(&self) -> Vec<Vec<Token>> {
        self.steps
            .iter()
            .filter_map(|s| s.emitted().map(<[Token]>::to_vec))
            .collect()
    }

    pub fn decisions(&self) -> Vec<Decision> {
        self.steps.iter().map(|s| s.decision).collect()
    }

    pub fn distributions(&self) -> Vec<DecisionDistribution> {
        self.steps.iter().map(|s| s.distribution).collect()
    }
}

/// Greedy free-running decoding with precomputed abstractions.
pub fn edit_with_abstractions(
    document: &Document,
    extract: &ExtractResult,
    abstractions: &[Vec<Token>],
    config: &EncoderConfig,
    params: &EditorParams,
) -> Result<MixedSummary> {
    if config.n != params.n {
        return Err(Error::shape("encoder width", params.n, config.n));
    }
    let inputs = prepare_inputs(document, extract, abstractions, config)?;
    let trace = forward(&inputs, params, None)?;
    let steps = trace
        .steps
        .iter()
        .zip(extract.order())
        .zip(abstractions)
        .map(|((st, &sentence), abs)| EditStep {
            sentence,
            decision: st.decision,
            distribution: DecisionDistribution { probs: st.probs },
            extracted: document.sentences()[sentence].tokens.clone(),
            abstracted: abs.clone(),
        })
        .collect();
    Ok(MixedSummary {
        steps,
        final_state: trace.final_state,
    })
}

/// Abstracts every extracted sentence, then decodes.
pub fn edit(
    document: &Document,
    extract: &ExtractResult,
    abstractor: &dyn Abstractor,
    config: &EncoderConfig,
    params: &EditorParams,
) -> Result<MixedSummary> {
    let abstractions = abstract_all(document, extract, abstractor)?;
    edit_with_abstractions(document, extract, &abstractions, config, params)
}

/// `-(1/l) sum_i sum_k y_ik ln max(p_ik, 1e-12)`
pub fn soft_cross_entropy(distributions: &[DecisionDistribution], labels: &[SoftLabel]) -> Result<f64> {
    if distributions.len() != labels.len() {
        return Err(Error::shape("labels", distributions.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(Error::invalid("loss", "no steps"));
    }
    Ok(cross_entropy_sum(distributions.iter().map(|d| &d.probs), labels) / labels.len() as f64)
}

pub(crate) fn cross_entropy_sum<'a>(probs: impl Iterator<Item = &'a [f64; 3]>, labels: &[SoftLabel]) -> f64 {
    let mut total = 0.0;
    for (p, y) in probs.zip(labels) {
        for k in 0..3 {
            if y[k] != 0.0 {
                total -= y[k] * p[k].max(LOG_CLAMP).ln();
            }
        }
    }
    total
}

/// Teacher decisions: argmax of each soft label.
pub fn teacher_decisions(labels: &[SoftLabel]) -> Vec<Decision> {
    labels.iter().map(Decision::argmax).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summarizers::{extract_lead, SalienceAbstractor};
    use crate::text::tokenize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_params_give_uniform() {
        let p = EditorParams::zeros(3, 4);
        let z = vec![0.3; 4];
        let input = StepInput {
            e: &z,
            a: &z,
            g_prev: &z,
            d: &z,
        };
        let dist = decision_distribution(&input, &p).unwrap();
        for v in dist.probs {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(dist.decision(), Decision::Extract);
    }

    #[test]
    fn bias_only_logits() {
        let mut p = EditorParams::zeros(3, 4);
        p.b = vec![10.0, 0.0, 0.0];
        let z = vec![0.0; 4];
        let dist = decision_distribution(
            &StepInput {
                e: &z,
                a: &z,
                g_prev: &z,
                d: &z,
            },
            &p,
        )
        .unwrap();
        let expect = 10f64.exp() / (10f64.exp() + 2.0);
        assert!((dist.probs[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn distribution_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, m) = (4, 3);
        let mut p = EditorParams::init(m, n, 5);
        p.b_c = random_vec(&mut rng, m);
        p.b = random_vec(&mut rng, 3);
        let (e, a, g, d) = (
            random_vec(&mut rng, n),
            random_vec(&mut rng, n),
            random_vec(&mut rng, n),
            random_vec(&mut rng, n),
        );
        let got = decision_distribution(
            &StepInput {
                e: &e,
                a: &a,
                g_prev: &g,
                d: &d,
            },
            &p,
        )
        .unwrap();
        // scalar loops over the concatenation
        let x: Vec<f64> = e.iter().chain(&a).chain(&g).chain(&d).copied().collect();
        let mut hidden = vec![0.0; m];
        for r in 0..m {
            let mut s = p.b_c[r];
            for c in 0..4 * n {
                s += p.w_c.get(r, c) * x[c];
            }
            hidden[r] = s.tanh();
        }
        let mut logits = [0.0; 3];
        for k in 0..3 {
            logits[k] = p.b[k];
            for r in 0..m {
                logits[k] += p.v.get(k, r) * hidden[r];
            }
        }
        let z: f64 = logits.iter().map(|o| o.exp()).sum();
        for k in 0..3 {
            assert!((got.probs[k] - logits[k].exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn distribution_shape_errors() {
        let p = EditorParams::zeros(3, 4);
        let ok = vec![0.0; 4];
        let bad = vec![0.0; 3];
        assert!(decision_distribution(
            &StepInput {
                e: &ok,
                a: &bad,
                g_prev: &ok,
                d: &ok
            },
            &p
        )
        .is_err());
    }

    #[test]
    fn shift_invariance_of_logits() {
        let mut p = EditorParams::init(4, 3, 1);
        let z = vec![0.2, -0.1, 0.4];
        let input = StepInput {
            e: &z,
            a: &z,
            g_prev: &z,
            d: &z,
        };
        let before = decision_distribution(&input, &p).unwrap();
        p.b.iter_mut().for_each(|b| *b += 123.25);
        let after = decision_distribution(&input, &p).unwrap();
        for k in 0..3 {
            assert!((before.probs[k] - after.probs[k]).abs() < 1e-12);
        }
        assert!((after.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn update_state_examples() {
        let g = vec![0.5, -0.0, 0.25];
        let e = vec![1.0, 2.0, 3.0];
        let a = vec![-1.0, 0.5, 0.0];
        let w = Matrix::uniform(3, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(2));
        let r = update_state(&g, Decision::Reject, &e, &a, &w).unwrap();
        assert_eq!(
            r.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            g.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(
            update_state(&g, Decision::Extract, &e, &a, &Matrix::zeros(3, 3)).unwrap(),
            g
        );
        let g1 = update_state(&[0.0; 3], Decision::Abstract, &e, &a, &Matrix::identity(3)).unwrap();
        assert_eq!(g1, a.iter().map(|x| x.tanh()).collect::<Vec<_>>());
        assert!(update_state(&g, Decision::Extract, &e, &a, &Matrix::zeros(2, 2)).is_err());
    }

    fn small_doc() -> Document {
        Document::from_texts(
            "t",
            &[
                "the mayor opened the new bridge on monday .",
                "traffic was heavy for hours .",
                "a parade followed in the evening .",
            ],
        )
        .unwrap()
    }

    fn enc(n: usize) -> EncoderConfig {
        EncoderConfig {
            n,
            hash_seed: 1,
            context_window: 1,
        }
    }

    #[test]
    fn zero_params_reproduce_extract() {
        let doc = small_doc();
        let ext = extract_lead(&doc, 3).unwrap();
        let out = edit(
            &doc,
            &ext,
            &SalienceAbstractor { ratio: 0.5 },
            &enc(8),
            &EditorParams::zeros(4, 8),
        )
        .unwrap();
        assert!(out.decisions().iter().all(|d| *d == Decision::Extract));
        let expect: Vec<Vec<Token>> = doc.sentences().iter().map(|s| s.tokens.clone()).collect();
        assert_eq!(out.text(), expect);
    }

    #[test]
    fn reject_bias_empties_summary() {
        let doc = small_doc();
        let ext = extract_lead(&doc, 3).unwrap();
        let mut p = EditorParams::init(4, 8, 3);
        p.v = Matrix::zeros(3, 4);
        p.b = vec![-10.0, -10.0, 10.0];
        let out = edit(&doc, &ext, &SalienceAbstractor::default(), &enc(8), &p).unwrap();
        assert!(out.decisions().iter().all(|d| *d == Decision::Reject));
        assert!(out.text().is_empty());
        assert_eq!(out.final_state, vec![0.0; 8]);
    }

    #[test]
    fn hand_set_parameters_force_abstract_then_reject() {
        // n = m = 1, x = [e, a, g, d]. hidden = tanh(10 - 20 g): +1 while the
        // state is empty, -1 once a kept sentence pushed g to ~1. Logits
        // V * hidden = (0, 5, -5) * hidden give A first, then R.
        let doc = Document::from_texts("t", &["alpha beta gamma", "delta"]).unwrap();
        let cfg = EncoderConfig {
            n: 1,
            hash_seed: 0,
            context_window: 0,
        };
        let ext = extract_lead(&doc, 2).unwrap();
        let abs = vec![tokenize("alpha"), tokenize("delta")];
        let a0 = encode_abstracted(&doc, 0, &abs[0], &cfg).unwrap().0[0];
        assert_eq!(a0.abs(), 1.0);
        let mut p = EditorParams::zeros(1, 1);
        p.w_c = Matrix::from_rows(vec![vec![0.0, 0.0, -20.0, 0.0]]).unwrap();
        p.b_c = vec![10.0];
        p.v = Matrix::from_rows(vec![vec![0.0], vec![5.0], vec![-5.0]]).unwrap();
        p.w_g = Matrix::from_rows(vec![vec![10.0 * a0]]).unwrap();
        let out = edit_with_abstractions(&doc, &ext, &abs, &cfg, &p).unwrap();
        assert_eq!(out.decisions(), [Decision::Abstract, Decision::Reject]);
        assert_eq!(out.text(), vec![tokenize("alpha")]);
        let p0 = out.steps[0].distribution.probs;
        let h = 10f64.tanh();
        let z = 1.0 + (5.0 * h).exp() + (-5.0 * h).exp();
        assert!((p0[1] - (5.0 * h).exp() / z).abs() < 1e-12);
    }

    #[test]
    fn emitted_versions_follow_decisions() {
        let doc = small_doc();
        let ext = extract_lead(&doc, 3).unwrap();
        for seed in 0..20 {
            let mut p = EditorParams::init(5, 8, seed);
            p.b = vec![0.0, 0.05 * seed as f64 - 0.5, 0.0];
            let out = edit(&doc, &ext, &SalienceAbstractor::default(), &enc(8), &p).unwrap();
            let mut text = Vec::new();
            for s in &out.steps {
                match s.decision {
                    Decision::Extract => text.push(doc.sentences()[s.sentence].tokens.clone()),
                    Decision::Abstract => text.push(s.abstracted.clone()),
                    Decision::Reject => {}
                }
            }
            assert_eq!(out.text(), text);
        }
    }

    #[test]
    fn loss_examples() {
        let one = DecisionDistribution { probs: [1.0, 0.0, 0.0] };
        assert_eq!(soft_cross_entropy(&[one], &[[1.0, 0.0, 0.0]]).unwrap(), 0.0);
        let u = DecisionDistribution::uniform();
        let y = [1.0 / 3.0; 3];
        for l in 1..5 {
            let loss = soft_cross_entropy(&vec![u; l], &vec![y; l]).unwrap();
            assert!((loss - 3f64.ln()).abs() < 1e-12);
        }
        let d = [
            DecisionDistribution { probs: [0.7, 0.2, 0.1] },
            DecisionDistribution {
                probs: [0.25, 0.25, 0.5],
            },
        ];
        let y = [[0.5, 0.5, 0.0], [0.1, 0.3, 0.6]];
        let by_hand =
            -(0.5 * 0.7f64.ln() + 0.5 * 0.2f64.ln() + 0.1 * 0.25f64.ln() + 0.3 * 0.25f64.ln() + 0.6 * 0.5f64.ln())
                / 2.0;
        assert!((soft_cross_entropy(&d, &y).unwrap() - by_hand).abs() < 1e-12);
        assert!(soft_cross_entropy(&d, &y[..1]).is_err());
    }

    #[test]
    fn loss_is_finite_under_saturation() {
        let d = DecisionDistribution { probs: [1.0, 0.0, 0.0] };
        let loss = soft_cross_entropy(&[d], &[[0.0, 1.0, 0.0]]).unwrap();
        assert!((loss - (-(LOG_CLAMP.ln()))).abs() < 1e-9);
    }

    #[test]
    fn decision_chars_round_trip() {
        for d in Decision::ALL {
            assert_eq!(Decision::from_char(d.as_char()), Some(d));
            assert_eq!(Decision::from_index(d.index()), Some(d));
        }
        assert_eq!(Decision::argmax(&[0.2, 0.4, 0.4]), Decision::Abstract);
        assert_eq!(Decision::argmax(&[0.3, 0.3, 0.3]), Decision::Extract);
    }
}
