//! Exact gradients of the soft cross-entropy through the unrolled editor.
//!
//! Sentence vectors are constants (the encoder is frozen). Decisions that
//! drive the state recurrence are either the teacher decisions or the
//! model's own argmax; in both cases they are treated as constants.

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::oracle::LabeledExample;
use crate::text::Document;

use super::{
    cross_entropy_sum, forward, prepare_inputs, teacher_decisions, Decision, EditorInputs, EditorParams, SoftLabel,
    LOG_CLAMP,
};

/// Loss and its gradient with respect to every parameter.
pub fn loss_and_gradients(
    inputs: &EditorInputs,
    labels: &[SoftLabel],
    params: &EditorParams,
    teacher_forcing: bool,
) -> Result<(f64, EditorParams)> {
    let mut grad = EditorParams::zeros(params.m, params.n);
    let loss = accumulate_gradients(inputs, labels, params, teacher_forcing, &mut grad)?;
    Ok((loss, grad))
}

/// Like [`loss_and_gradients`], but adds the gradient into `grad`.
pub fn accumulate_gradients(
    inputs: &EditorInputs,
    labels: &[SoftLabel],
    params: &EditorParams,
    teacher_forcing: bool,
    grad: &mut EditorParams,
) -> Result<f64> {
    if !grad.same_shape(params) {
        return Err(Error::shape(
            "gradient buffer",
            format!("m={} n={}", params.m, params.n),
            format!("m={} n={}", grad.m, grad.n),
        ));
    }
    if labels.len() != inputs.len() {
        return Err(Error::shape("labels", inputs.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(Error::invalid("loss", "no steps"));
    }
    let teacher = teacher_forcing.then(|| teacher_decisions(labels));
    let trace = forward(inputs, params, teacher.as_deref())?;
    let n = params.n;
    let steps = labels.len() as f64;
    let loss = cross_entropy_sum(trace.steps.iter().map(|s| &s.probs), labels) / steps;

    let mut d_doc = vec![0.0; n];
    let mut d_state_in: Vec<Vec<f64>> = Vec::with_capacity(trace.steps.len());

    for (step, y) in trace.steps.iter().zip(labels) {
        // q_k = p_k * dL/dp_k; zero where the log clamp is active
        let q: [f64; 3] = std::array::from_fn(|k| if step.probs[k] > LOG_CLAMP { -y[k] / steps } else { 0.0 });
        let q_sum: f64 = q.iter().sum();
        let d_logits: [f64; 3] = std::array::from_fn(|k| q[k] - step.probs[k] * q_sum);

        for k in 0..3 {
            grad.b[k] += d_logits[k];
        }
        grad.v.add_outer(&d_logits, &step.hidden);

        let d_hidden = params.v.matvec_t(&d_logits);
        let d_pre: Vec<f64> = d_hidden
            .iter()
            .zip(&step.hidden)
            .map(|(dh, h)| dh * (1.0 - h * h))
            .collect();
        for (b, d) in grad.b_c.iter_mut().zip(&d_pre) {
            *b += d;
        }
        grad.w_c.add_outer(&d_pre, &step.x);

        let d_x = params.w_c.matvec_t(&d_pre);
        d_state_in.push(d_x[2 * n..3 * n].to_vec());
        for (acc, v) in d_doc.iter_mut().zip(&d_x[3 * n..]) {
            *acc += v;
        }
    }

    // g_i = g_{i-1} + tanh(W_g h_i); the final state feeds nothing.
    let mut d_state = vec![0.0; n];
    for (i, step) in trace.steps.iter().enumerate().rev() {
        if let Some(inc) = &step.increment {
            let h = match step.decision {
                Decision::Extract => &inputs.extracted[i].0,
                Decision::Abstract => &inputs.abstracted[i].0,
                Decision::Reject => unreachable!("reject has no increment"),
            };
            let d_inc: Vec<f64> = d_state.iter().zip(inc).map(|(g, t)| g * (1.0 - t * t)).collect();
            grad.w_g.add_outer(&d_inc, h);
        }
        for (g, v) in d_state.iter_mut().zip(&d_state_in[i]) {
            *g += v;
        }
    }

    let d_proj: Vec<f64> = d_doc.iter().zip(&trace.d).map(|(g, d)| g * (1.0 - d * d)).collect();
    grad.doc.w_d.add_outer(&d_proj, &inputs.mean);
    for (b, d) in grad.doc.b_d.iter_mut().zip(&d_proj) {
        *b += d;
    }
    Ok(loss)
}

/// Loss and gradient for one labeled example, encoding its sentences first.
pub fn gradients(
    document: &Document,
    labeled: &LabeledExample,
    config: &EncoderConfig,
    params: &EditorParams,
    teacher_forcing: bool,
) -> Result<(f64, EditorParams)> {
    let inputs = prepare_inputs(document, &labeled.extract, &labeled.abstractions, config)?;
    loss_and_gradients(&inputs, &labeled.labels, params, teacher_forcing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::editor::softmax;
    use crate::encoder::SentenceVec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_inputs(rng: &mut ChaCha8Rng, n: usize, l: usize) -> EditorInputs {
        let mut v = || SentenceVec((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        EditorInputs {
            mean: v().0,
            extracted: (0..l).map(|_| v()).collect(),
            abstracted: (0..l).map(|_| v()).collect(),
        }
    }

    fn random_labels(rng: &mut ChaCha8Rng, l: usize) -> Vec<SoftLabel> {
        (0..l)
            .map(|_| {
                let raw: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.05..1.0));
                let s: f64 = raw.iter().sum();
                raw.map(|x| x / s)
            })
            .collect()
    }

    fn random_params(rng: &mut ChaCha8Rng, m: usize, n: usize) -> EditorParams {
        let mut p = EditorParams::init_with(m, n, rng);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|x| *x += rng.gen_range(-0.3..0.3));
        }
        p
    }

    fn loss_at(
        inputs: &EditorInputs,
        labels: &[SoftLabel],
        params: &EditorParams,
        teacher: Option<&[Decision]>,
    ) -> f64 {
        let trace = forward(inputs, params, teacher).unwrap();
        cross_entropy_sum(trace.steps.iter().map(|s| &s.probs), labels) / labels.len() as f64
    }

    #[test]
    fn analytic_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let h = 1e-5;
        for trial in 0..12 {
            let (n, m, l) = (1 + trial % 4, 1 + trial % 3, 1 + trial % 3);
            let inputs = random_inputs(&mut rng, n, l);
            let labels = random_labels(&mut rng, l);
            let params = random_params(&mut rng, m, n);
            let forcing = trial % 2 == 0;
            let (_, grad) = loss_and_gradients(&inputs, &labels, &params, forcing).unwrap();
            // decisions are piecewise constant; hold them fixed
            let decisions: Vec<Decision> = forward(&inputs, &params, None)
                .unwrap()
                .steps
                .iter()
                .map(|s| s.decision)
                .collect();
            let fixed = if forcing { teacher_decisions(&labels) } else { decisions };
            for t in 0..7 {
                for j in 0..grad.tensors()[t].len() {
                    let mut plus = params.clone();
                    plus.tensors_mut()[t][j] += h;
                    let mut minus = params.clone();
                    minus.tensors_mut()[t][j] -= h;
                    let fd = (loss_at(&inputs, &labels, &plus, Some(&fixed))
                        - loss_at(&inputs, &labels, &minus, Some(&fixed)))
                        / (2.0 * h);
                    let an = grad.tensors()[t][j];
                    let err = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                    assert!(err < 1e-4, "trial {trial} tensor {t} entry {j}: analytic {an} fd {fd}");
                }
            }
        }
    }

    #[test]
    fn logit_gradient_vanishes_when_prediction_equals_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 3;
        let inputs = random_inputs(&mut rng, n, 1);
        let mut params = EditorParams::zeros(2, n);
        params.b = vec![0.4, -1.0, 0.25];
        let y = softmax([0.4, -1.0, 0.25]);
        let (_, grad) = loss_and_gradients(&inputs, &[y], &params, true).unwrap();
        for g in &grad.b {
            assert!(g.abs() < 1e-15);
        }
    }

    #[test]
    fn state_matrix_gradient_zero_when_teacher_rejects() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inputs = random_inputs(&mut rng, 4, 3);
        let params = random_params(&mut rng, 3, 4);
        let labels = vec![[0.1, 0.2, 0.7]; 3];
        let (_, grad) = loss_and_gradients(&inputs, &labels, &params, true).unwrap();
        assert!(grad.w_g.as_slice().iter().all(|g| *g == 0.0));
        assert!(grad.w_c.as_slice().iter().any(|g| *g != 0.0));
    }

    #[test]
    fn label_count_must_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs = random_inputs(&mut rng, 2, 2);
        let params = EditorParams::zeros(2, 2);
        assert!(loss_and_gradients(&inputs, &[[1.0, 0.0, 0.0]], &params, true).is_err());
    }

    #[test]
    fn accumulation_adds_to_existing_buffer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inputs = random_inputs(&mut rng, 3, 2);
        let labels = random_labels(&mut rng, 2);
        let params = random_params(&mut rng, 2, 3);
        let (loss, g) = loss_and_gradients(&inputs, &labels, &params, true).unwrap();
        let mut buf = g.clone();
        let again = accumulate_gradients(&inputs, &labels, &params, true, &mut buf).unwrap();
        assert_eq!(loss, again);
        let mut doubled = g.clone();
        doubled.add_assign(&g);
        for (a, b) in buf.tensors().iter().zip(doubled.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
        assert!(accumulate_gradients(&inputs, &labels, &params, true, &mut EditorParams::zeros(2, 4)).is_err());
    }
}
