//! ADAM, the teacher-forced epoch loop, and corpus evaluation.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::editor::{
    accumulate_gradients, decode_decisions, edit, loss_and_gradients, prepare_inputs, Checkpoint, Decision,
    EditorInputs, EditorParams,
};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::oracle::{realize, DecisionSequence, LabeledExample};
use crate::rouge::{reward, rouge_triple, RewardWeights};
use crate::summarizers::{Abstractor, Extractor};
use crate::text::Example;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("adam config", format!("{self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub first: EditorParams,
    pub second: EditorParams,
}

impl AdamState {
    pub fn new(params: &EditorParams, config: AdamConfig) -> AdamState {
        AdamState {
            config,
            t: 0,
            first: EditorParams::zeros(params.m, params.n),
            second: EditorParams::zeros(params.m, params.n),
        }
    }
}

/// One bias-corrected ADAM update, entrywise over every tensor.
pub fn adam_step(params: &mut EditorParams, grads: &EditorParams, state: &mut AdamState) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.first) || !params.same_shape(&state.second) {
        return Err(Error::shape(
            "adam operands",
            format!("m={} n={}", params.m, params.n),
            format!("m={} n={}", grads.m, grads.n),
        ));
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.first.tensors_mut())
        .zip(state.second.tensors_mut());
    for (((p, g), m), v) in tensors {
        for j in 0..p.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Threads for per-example gradients; results are reduced in a fixed
    /// order, but only single-worker runs are guaranteed bitwise stable.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 20,
            seed: 1,
            adam: AdamConfig::default(),
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("train config", "batch_size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("train config", "epochs must be at least 1"));
        }
        self.adam.validate()
    }
}

/// An example together with its precomputed oracle supervision.
#[derive(Clone, Debug, PartialEq)]
pub struct Supervised {
    pub example: Example,
    pub labeled: LabeledExample,
}

/// Joins labels to examples by id, in label order.
pub fn pair_labels(examples: &[Example], labeled: Vec<LabeledExample>) -> Result<Vec<Supervised>> {
    let by_id: HashMap<&str, &Example> = examples.iter().map(|e| (e.id(), e)).collect();
    labeled
        .into_iter()
        .map(|l| match by_id.get(l.id.as_str()) {
            Some(ex) => Ok(Supervised {
                example: (*ex).clone(),
                labeled: l,
            }),
            None => Err(Error::Cache(format!("label for unknown example {}", l.id))),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    pub optimizer_steps: u64,
}

fn prepare_all(items: &[Supervised], encoder: &EncoderConfig) -> Result<Vec<EditorInputs>> {
    items
        .iter()
        .map(|s| {
            prepare_inputs(
                &s.example.document,
                &s.labeled.extract,
                &s.labeled.abstractions,
                encoder,
            )
        })
        .collect()
}

fn decoded_reward(
    item: &Supervised,
    inputs: &EditorInputs,
    params: &EditorParams,
    weights: &RewardWeights,
) -> Result<f64> {
    let decisions = DecisionSequence(decode_decisions(inputs, params)?);
    let summary = realize(
        &item.example.document,
        &item.labeled.extract,
        &item.labeled.abstractions,
        &decisions,
    )?;
    Ok(reward(&summary, &item.example.reference, weights))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}

/// Trains with teacher forcing and keeps the epoch with the best free-running
/// validation reward (earliest on ties).
pub fn train(
    train_set: &[Supervised],
    validation: &[Supervised],
    encoder: &EncoderConfig,
    weights: &RewardWeights,
    config: &TrainConfig,
    initial: EditorParams,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set", "empty"));
    }
    if validation.is_empty() {
        return Err(Error::invalid("validation set", "empty"));
    }
    if encoder.n != initial.n {
        return Err(Error::shape("encoder width", initial.n, encoder.n));
    }
    initial.check()?;
    let train_inputs = prepare_all(train_set, encoder)?;
    let val_inputs = prepare_all(validation, encoder)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::invalid("worker pool", e.to_string()))?;

    let mut params = initial;
    let mut adam = AdamState::new(&params, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, EditorParams)> = None;
    let mut grad = EditorParams::zeros(params.m, params.n);
    let mut scratch = grad.clone();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.fill_zero();
            if config.workers <= 1 {
                for &i in batch {
                    scratch.fill_zero();
                    loss_sum += accumulate_gradients(
                        &train_inputs[i],
                        &train_set[i].labeled.labels,
                        &params,
                        true,
                        &mut scratch,
                    )?;
                    grad.add_assign(&scratch);
                }
            } else {
                let member =
                    |&i: &usize| loss_and_gradients(&train_inputs[i], &train_set[i].labeled.labels, &params, true);
                let results: Vec<Result<(f64, EditorParams)>> = pool.install(|| batch.par_iter().map(member).collect());
                for r in results {
                    let (loss, g) = r?;
                    loss_sum += loss;
                    grad.add_assign(&g);
                }
            }
            grad.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &grad, &mut adam)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let rewards = validation
            .iter()
            .zip(&val_inputs)
            .map(|(item, inputs)| decoded_reward(item, inputs, &params, weights))
            .collect::<Result<Vec<f64>>>()?;
        let val_reward = mean(rewards.into_iter());
        log.push(EpochLog {
            epoch,
            train_loss,
            val_reward,
        });
        if best.as_ref().is_none_or(|(_, r, _)| val_reward > *r) {
            best = Some((epoch, val_reward, params.clone()));
        }
    }
    let (best_epoch, _, best_params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best: Checkpoint::new(best_params, *encoder)?,
        best_epoch,
        log,
        optimizer_steps: adam.t,
    })
}

pub fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for entry in log {
        writeln!(w, "{}", serde_json::to_string(entry)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fraction of steps where free-running decoding agrees with each
/// example's oracle-best sequence, pooled over all steps.
pub fn decision_accuracy(items: &[Supervised], checkpoint: &Checkpoint) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for item in items {
        let inputs = prepare_inputs(
            &item.example.document,
            &item.labeled.extract,
            &item.labeled.abstractions,
            &checkpoint.encoder,
        )?;
        let decisions = decode_decisions(&inputs, &checkpoint.params)?;
        hits += decisions
            .iter()
            .zip(item.labeled.best.decisions())
            .filter(|(a, b)| a == b)
            .count();
        total += decisions.len();
    }
    if total == 0 {
        return Err(Error::invalid("decision accuracy", "no steps"));
    }
    Ok(hits as f64 / total as f64)
}

/// Mean reward of the all-E summaries of labeled items.
pub fn extract_only_reward(items: &[Supervised], weights: &RewardWeights) -> Result<f64> {
    let rewards = items
        .iter()
        .map(|s| {
            let all_e = DecisionSequence::uniform(Decision::Extract, s.labeled.steps());
            let summary = realize(&s.example.document, &s.labeled.extract, &s.labeled.abstractions, &all_e)?;
            Ok(reward(&summary, &s.example.reference, weights))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(rewards.into_iter()))
}

/// Mean reward of free-running decoded summaries of labeled items.
pub fn edited_reward(items: &[Supervised], checkpoint: &Checkpoint, weights: &RewardWeights) -> Result<f64> {
    let rewards = items
        .iter()
        .map(|s| {
            let inputs = prepare_inputs(
                &s.example.document,
                &s.labeled.extract,
                &s.labeled.abstractions,
                &checkpoint.encoder,
            )?;
            decoded_reward(s, &inputs, &checkpoint.params, weights)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(rewards.into_iter()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionFractions {
    #[serde(rename = "E")]
    pub extract: f64,
    #[serde(rename = "A")]
    pub abstracted: f64,
    #[serde(rename = "R")]
    pub reject: f64,
}

impl DecisionFractions {
    pub fn total(&self) -> f64 {
        self.extract + self.abstracted + self.reject
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub examples: usize,
    pub steps: usize,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    pub mean_reward: f64,
    pub extract_only_reward: f64,
    pub decision_fractions: DecisionFractions,
    /// Mean over examples with a non-empty summary of the share of emitted
    /// sentences that are abstracted.
    pub abstracted_fraction: f64,
}

/// Decodes every test example and aggregates ROUGE, reward and decision
/// statistics.
pub fn evaluate(
    test: &[Example],
    checkpoint: &Checkpoint,
    extractor: &dyn Extractor,
    abstractor: &dyn Abstractor,
    weights: &RewardWeights,
) -> Result<Report> {
    if test.is_empty() {
        return Err(Error::invalid("test set", "empty"));
    }
    weights.validate()?;
    let mut counts = [0usize; 3];
    let (mut r1, mut r2, mut rl, mut r, mut base) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut abstracted_sum = 0.0;
    let mut nonempty = 0usize;
    for ex in test {
        let extract = extractor.extract(ex)?;
        let summary = edit(
            &ex.document,
            &extract,
            abstractor,
            &checkpoint.encoder,
            &checkpoint.params,
        )?;
        for d in summary.decisions() {
            counts[d.index()] += 1;
        }
        let text = summary.text();
        let triple = rouge_triple(&text, &ex.reference);
        r1 += triple.rouge_1.f1;
        r2 += triple.rouge_2.f1;
        rl += triple.rouge_l.f1;
        r += reward(&text, &ex.reference, weights);
        let extracted: Vec<&[_]> = summary.steps.iter().map(|s| s.extracted.as_slice()).collect();
        base += reward(&extracted, &ex.reference, weights);
        let emitted = counts_of(&summary.decisions());
        if emitted.0 + emitted.1 > 0 {
            abstracted_sum += emitted.1 as f64 / (emitted.0 + emitted.1) as f64;
            nonempty += 1;
        }
    }
    let steps: usize = counts.iter().sum();
    let k = test.len() as f64;
    let frac = |c: usize| c as f64 / steps as f64;
    Ok(Report {
        examples: test.len(),
        steps,
        rouge_1: r1 / k,
        rouge_2: r2 / k,
        rouge_l: rl / k,
        mean_reward: r / k,
        extract_only_reward: base / k,
        decision_fractions: DecisionFractions {
            extract: frac(counts[0]),
            abstracted: frac(counts[1]),
            reject: frac(counts[2]),
        },
        abstracted_fraction: if nonempty == 0 {
            0.0
        } else {
            abstracted_sum / nonempty as f64
        },
    })
}

/// (extracted, abstracted) counts.
fn counts_of(decisions: &[Decision]) -> (usize, usize) {
    let e = decisions.iter().filter(|d| **d == Decision::Extract).count();
    let a = decisions.iter().filter(|d| **d == Decision::Abstract).count();
    (e, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::editor::forward;
    use crate::oracle::{label_dataset, OracleConfig};
    use crate::summarizers::{LeadExtractor, SalienceAbstractor};
    use crate::synth::{generate, SynthConfig};
    use crate::text::{Document, ReferenceSummary};

    fn enc(n: usize) -> EncoderConfig {
        EncoderConfig {
            n,
            ..EncoderConfig::default()
        }
    }

    fn supervised(examples: &[Example], k: usize) -> Vec<Supervised> {
        let out = label_dataset(
            examples,
            &LeadExtractor { k },
            &SalienceAbstractor::default(),
            &OracleConfig::default(),
            1,
        )
        .unwrap();
        assert!(out.failures.is_empty());
        pair_labels(examples, out.labeled).unwrap()
    }

    fn synth(count: usize, seed: u64) -> Vec<Example> {
        let cfg = SynthConfig {
            examples: count,
            seed,
            ..SynthConfig::default()
        };
        generate(&cfg, &SalienceAbstractor::default())
            .unwrap()
            .into_iter()
            .map(|s| s.example)
            .collect()
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = EditorParams::init(3, 2, 4);
        let before = p.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &EditorParams::zeros(3, 2), &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = EditorParams::zeros(1, 1);
        let mut g = EditorParams::zeros(1, 1);
        g.b[0] = 1.0;
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut st).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction
        let (b1, b2) = (0.9f64, 0.999f64);
        let m_hat = (1.0 - b1) / (1.0 - b1);
        let v_hat = (1.0 - b2) / (1.0 - b2);
        let expected = -1e-4 * m_hat / (v_hat.sqrt() + 1e-8);
        assert_eq!(p.b[0], expected);
        assert!((p.b[0] + 1e-4).abs() < 1e-11);
        assert_eq!(p.b[1], 0.0);
    }

    #[test]
    fn adam_is_deterministic_and_checks_shapes() {
        let g = EditorParams::init(2, 2, 5);
        let run = || {
            let mut p = EditorParams::init(2, 2, 6);
            let mut st = AdamState::new(&p, AdamConfig::default());
            adam_step(&mut p, &g, &mut st).unwrap();
            adam_step(&mut p, &g, &mut st).unwrap();
            (p, st)
        };
        assert_eq!(run(), run());
        let mut p = EditorParams::zeros(2, 3);
        let mut st = AdamState::new(&p, AdamConfig::default());
        assert!(adam_step(&mut p, &g, &mut st).is_err());
    }

    #[test]
    fn single_example_single_epoch() {
        let ex = vec![Example {
            document: Document::from_texts("one", &["alpha beta gamma delta .", "epsilon zeta ."]).unwrap(),
            reference: ReferenceSummary::from_texts(&["alpha beta gamma ."]).unwrap(),
        }];
        let items = supervised(&ex, 2);
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let out = train(
            &items,
            &items,
            &enc(8),
            &RewardWeights::default(),
            &cfg,
            EditorParams::init(4, 8, 1),
        )
        .unwrap();
        assert_eq!(out.optimizer_steps, 1);
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.best_epoch, 1);
        assert!(train(
            &[],
            &items,
            &enc(8),
            &RewardWeights::default(),
            &cfg,
            EditorParams::init(4, 8, 1)
        )
        .is_err());
    }

    #[test]
    fn training_is_reproducible() {
        let items = supervised(&synth(40, 3), 5);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let run = || {
            train(
                &items[..30],
                &items[30..],
                &enc(16),
                &RewardWeights::default(),
                &cfg,
                EditorParams::init(8, 16, 2),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_eq!(a.optimizer_steps, 3 * 4);
        let f1 = tempfile::NamedTempFile::new().unwrap();
        let f2 = tempfile::NamedTempFile::new().unwrap();
        write_log(f1.path(), &a.log).unwrap();
        write_log(f2.path(), &b.log).unwrap();
        assert_eq!(std::fs::read(f1.path()).unwrap(), std::fs::read(f2.path()).unwrap());
        let first = std::fs::read_to_string(f1.path()).unwrap();
        assert!(first.starts_with("{\"epoch\":1,\"train_loss\":"));
    }

    #[test]
    fn parallel_batches_match_single_worker() {
        let items = supervised(&synth(24, 4), 5);
        let base = TrainConfig {
            epochs: 2,
            batch_size: 6,
            ..TrainConfig::default()
        };
        let run = |workers| {
            let cfg = TrainConfig { workers, ..base };
            train(
                &items[..18],
                &items[18..],
                &enc(8),
                &RewardWeights::default(),
                &cfg,
                EditorParams::init(4, 8, 2),
            )
            .unwrap()
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn train_loss_decreases_on_synthetic_corpus() {
        let items = supervised(&synth(160, 5), 5);
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let out = train(
            &items[..128],
            &items[128..],
            &enc(64),
            &RewardWeights::default(),
            &cfg,
            EditorParams::init(64, 64, 7),
        )
        .unwrap();
        for w in out.log.windows(2) {
            assert!(w[1].train_loss < w[0].train_loss, "{:?}", out.log);
        }
    }

    #[test]
    fn teacher_forced_state_ignores_scores() {
        let items = supervised(&synth(3, 6), 5);
        let p = EditorParams::init(6, 16, 3);
        for item in &items {
            let inputs = prepare_inputs(
                &item.example.document,
                &item.labeled.extract,
                &item.labeled.abstractions,
                &enc(16),
            )
            .unwrap();
            let teacher = crate::editor::teacher_decisions(&item.labeled.labels);
            let a = forward(&inputs, &p, Some(&teacher)).unwrap();
            let mut corrupted = p.clone();
            corrupted.b = vec![50.0, -50.0, 3.0];
            corrupted.v.as_mut_slice().iter_mut().for_each(|x| *x = -*x * 7.0);
            let b = forward(&inputs, &corrupted, Some(&teacher)).unwrap();
            assert_eq!(a.final_state, b.final_state);
            for (x, y) in a.steps.iter().zip(&b.steps) {
                assert_eq!(x.increment, y.increment);
            }
        }
    }

    fn forcing(decision: Decision, n: usize) -> Checkpoint {
        let mut p = EditorParams::zeros(2, n);
        p.b[decision.index()] = 5.0;
        Checkpoint::new(p, enc(n)).unwrap()
    }

    #[test]
    fn evaluate_forced_checkpoints() {
        let test = synth(6, 8);
        let lead = LeadExtractor { k: 5 };
        let abs = SalienceAbstractor::default();
        let w = RewardWeights::default();
        let all_e = evaluate(&test, &forcing(Decision::Extract, 8), &lead, &abs, &w).unwrap();
        assert_eq!(
            all_e.decision_fractions,
            DecisionFractions {
                extract: 1.0,
                abstracted: 0.0,
                reject: 0.0
            }
        );
        assert_eq!(all_e.mean_reward, all_e.extract_only_reward);
        assert_eq!(all_e.abstracted_fraction, 0.0);
        let all_r = evaluate(&test, &forcing(Decision::Reject, 8), &lead, &abs, &w).unwrap();
        assert_eq!(all_r.decision_fractions.reject, 1.0);
        assert_eq!(
            (all_r.rouge_1, all_r.rouge_2, all_r.rouge_l, all_r.mean_reward),
            (0.0, 0.0, 0.0, 0.0)
        );
        let all_a = evaluate(&test, &forcing(Decision::Abstract, 8), &lead, &abs, &w).unwrap();
        assert_eq!(all_a.abstracted_fraction, 1.0);
    }

    #[test]
    fn pair_labels_rejects_unknown_ids() {
        let examples = synth(2, 9);
        let mut items = supervised(&examples, 5);
        let mut stray = items.pop().unwrap().labeled;
        stray.id = "nope".into();
        assert!(pair_labels(&examples, vec![stray]).is_err());
    }
}
