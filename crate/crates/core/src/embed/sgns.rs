//! Negative-sampling objective.
//!
//! For a center (input) vector `v`, a true context (output) vector `u⁺` and
//! negative output vectors `u⁻ₖ`:
//!
//! ```text
//! L = −log σ(u⁺·v) − Σₖ log σ(−u⁻ₖ·v)
//! ```
//!
//! In CBOW mode `v` is the mean of the context input vectors and the true
//! output is the center identity.

use crate::scalar::{axpy, dot, sigmoid, softplus};
use crate::Scalar;

use super::EmbeddingTable;

/// Loss of one logistic term and its derivative with respect to the score.
#[inline]
pub(crate) fn logistic_term<F: Scalar>(score: F, positive: bool) -> (F, F) {
    if positive {
        (softplus(-score), sigmoid(score) - F::one())
    } else {
        (softplus(score), sigmoid(score))
    }
}

/// Loss and exact gradients of one negative-sampling example.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradient<F> {
    pub loss: F,
    /// ∂L/∂v for the center input vector (skip-gram) or ∂L/∂vᵢ for each
    /// context input vector (CBOW; identical for every context member).
    pub input: Vec<F>,
    /// ∂L/∂u⁺.
    pub positive: Vec<F>,
    /// ∂L/∂u⁻ₖ, one per entry of the negative list (repeated ids repeat).
    pub negatives: Vec<Vec<F>>,
}

fn gradient_for<F: Scalar>(
    hidden: &[F],
    positive: &[F],
    negatives: &[&[F]],
    input_scale: F,
) -> SgnsGradient<F> {
    let dim = hidden.len();
    let mut input = vec![F::zero(); dim];

    let (mut loss, g) = logistic_term(dot(positive, hidden), true);
    axpy(g, positive, &mut input);
    let positive_grad = hidden.iter().map(|&h| g * h).collect();

    let mut negative_grads = Vec::with_capacity(negatives.len());
    for &u in negatives {
        let (l, g) = logistic_term(dot(u, hidden), false);
        loss += l;
        axpy(g, u, &mut input);
        negative_grads.push(hidden.iter().map(|&h| g * h).collect());
    }
    for x in &mut input {
        *x *= input_scale;
    }
    SgnsGradient {
        loss,
        input,
        positive: positive_grad,
        negatives: negative_grads,
    }
}

/// Skip-gram example: `center` predicts `context` against `negatives`.
pub fn loss_and_gradient<F: Scalar>(
    center: u32,
    context: u32,
    negatives: &[u32],
    table: &EmbeddingTable<F>,
) -> SgnsGradient<F> {
    let negs: Vec<&[F]> = negatives.iter().map(|&n| table.output_vector(n)).collect();
    gradient_for(
        table.input_vector(center),
        table.output_vector(context),
        &negs,
        F::one(),
    )
}

/// CBOW example: the mean of `contexts` predicts `target` against `negatives`.
pub fn cbow_loss_and_gradient<F: Scalar>(
    contexts: &[u32],
    target: u32,
    negatives: &[u32],
    table: &EmbeddingTable<F>,
) -> SgnsGradient<F> {
    assert!(!contexts.is_empty(), "CBOW needs at least one context");
    let scale = F::one() / F::from_usize_lossy(contexts.len());
    let mut hidden = vec![F::zero(); table.dim()];
    for &c in contexts {
        axpy(scale, table.input_vector(c), &mut hidden);
    }
    let negs: Vec<&[F]> = negatives.iter().map(|&n| table.output_vector(n)).collect();
    gradient_for(&hidden, table.output_vector(target), &negs, scale)
}

/// Row storage the trainer reads and updates.
pub(crate) trait ParamStore<F: Scalar> {
    fn read_input(&self, id: u32, out: &mut [F]);
    fn read_output(&self, id: u32, out: &mut [F]);
    fn add_input(&mut self, id: u32, scale: F, delta: &[F]);
    fn add_output(&mut self, id: u32, scale: F, delta: &[F]);
}

impl<F: Scalar> ParamStore<F> for EmbeddingTable<F> {
    fn read_input(&self, id: u32, out: &mut [F]) {
        out.copy_from_slice(self.input_vector(id));
    }

    fn read_output(&self, id: u32, out: &mut [F]) {
        out.copy_from_slice(self.output_vector(id));
    }

    fn add_input(&mut self, id: u32, scale: F, delta: &[F]) {
        axpy(scale, delta, self.input_vector_mut(id));
    }

    fn add_output(&mut self, id: u32, scale: F, delta: &[F]) {
        axpy(scale, delta, self.output_vector_mut(id));
    }
}

/// Per-worker buffers for [`sgd_step`].
pub(crate) struct Scratch<F> {
    hidden: Vec<F>,
    grad: Vec<F>,
    row: Vec<F>,
}

impl<F: Scalar> Scratch<F> {
    pub(crate) fn new(dim: usize) -> Self {
        Scratch {
            hidden: vec![F::zero(); dim],
            grad: vec![F::zero(); dim],
            row: vec![F::zero(); dim],
        }
    }
}

/// One SGD step on a negative-sampling example; returns the example loss.
///
/// `inputs` holds the center (skip-gram) or the context ids (CBOW); their
/// mean is the hidden vector. Output rows are updated as they are visited,
/// input rows once at the end with the gradient taken at the old outputs.
pub(crate) fn sgd_step<F: Scalar, S: ParamStore<F>>(
    store: &mut S,
    inputs: &[u32],
    positive: u32,
    negatives: &[u32],
    lr: F,
    scratch: &mut Scratch<F>,
) -> F {
    let Scratch { hidden, grad, row } = scratch;
    let scale = F::one() / F::from_usize_lossy(inputs.len());
    if let [single] = inputs {
        store.read_input(*single, hidden);
    } else {
        hidden.iter_mut().for_each(|h| *h = F::zero());
        for &id in inputs {
            store.read_input(id, row);
            axpy(scale, row, hidden);
        }
    }
    grad.iter_mut().for_each(|g| *g = F::zero());

    let mut loss = F::zero();
    let targets = std::iter::once((positive, true)).chain(negatives.iter().map(|&n| (n, false)));
    for (target, label) in targets {
        store.read_output(target, row);
        let (l, g) = logistic_term(dot(row, hidden), label);
        loss += l;
        axpy(g, row, grad);
        store.add_output(target, -lr * g, hidden);
    }
    for &id in inputs {
        store.add_input(id, -lr * scale, grad);
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::Provenance;

    fn table(dim: usize, input: Vec<f64>, output: Vec<f64>, n: usize) -> EmbeddingTable<f64> {
        EmbeddingTable::new(
            (0..n).map(|i| format!("p{i}")).collect(),
            dim,
            input,
            output,
            Provenance::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_vectors_give_log2_per_term() {
        let t = table(4, vec![0.0; 16], vec![0.0; 16], 4);
        let g = loss_and_gradient(0, 1, &[2, 3, 2], &t);
        assert!((g.loss - 4.0 * 2f64.ln()).abs() < 1e-12);
        let g = cbow_loss_and_gradient(&[0, 1], 2, &[3], &t);
        assert!((g.loss - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_positive_score_drives_loss_to_zero() {
        let mut previous = f64::INFINITY;
        for scale in [3.0, 10.0, 30.0] {
            let mut input = vec![0.0; 4];
            let mut output = vec![0.0; 4];
            input[0] = scale;
            output[2] = scale;
            let t = table(2, input, output, 2);
            let g = loss_and_gradient(0, 1, &[], &t);
            assert!(g.loss <= 2.0 * (-scale * scale).exp());
            assert!(g.loss >= 0.0 && g.loss < previous);
            previous = g.loss;
        }
    }

    #[test]
    fn step_matches_gradient_descent() {
        let input = vec![0.1, -0.2, 0.3, 0.05, -0.1, 0.2];
        let output = vec![0.2, 0.1, -0.3, 0.4, 0.0, -0.2];
        let t = table(2, input, output, 3);
        let grad = loss_and_gradient(0, 1, &[2], &t);

        let mut stepped = t.clone();
        let mut scratch = Scratch::new(2);
        let loss = sgd_step(&mut stepped, &[0], 1, &[2], 0.5, &mut scratch);
        assert!((loss - grad.loss).abs() < 1e-15);
        for d in 0..2 {
            let expect_v = t.input_vector(0)[d] - 0.5 * grad.input[d];
            let expect_u = t.output_vector(1)[d] - 0.5 * grad.positive[d];
            let expect_n = t.output_vector(2)[d] - 0.5 * grad.negatives[0][d];
            assert!((stepped.input_vector(0)[d] - expect_v).abs() < 1e-15);
            assert!((stepped.output_vector(1)[d] - expect_u).abs() < 1e-15);
            assert!((stepped.output_vector(2)[d] - expect_n).abs() < 1e-15);
        }
    }
}
