//! The choice model: dot-product similarity, softmax over the three pairs of a
//! triplet, the penalized negative log-likelihood and its gradient.
//!
//! Objectives here are in minimization form: `-log-likelihood + lambda * L1`.
//! Gradients are sums over the supplied judgments, not means.

use ndarray::{Array2, ArrayView1};

use crate::data::{Embedding, Pair, TripletDataset, TripletJudgment};
use crate::error::{Result, SposeError};

/// Choice probabilities of the pairs `(a,b)`, `(a,c)`, `(b,c)` of a sorted triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletProbabilities {
    pub p12: f64,
    pub p13: f64,
    pub p23: f64,
}

impl TripletProbabilities {
    pub fn get(&self, pair: Pair) -> f64 {
        match pair {
            Pair::Ab => self.p12,
            Pair::Ac => self.p13,
            Pair::Bc => self.p23,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p12, self.p13, self.p23]
    }
}

/// Dot product of two concept vectors.
pub fn similarity(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(SposeError::Shape(format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(x.dot(&y))
}

pub fn triplet_probabilities(s12: f64, s13: f64, s23: f64) -> Result<TripletProbabilities> {
    if !(s12.is_finite() && s13.is_finite() && s23.is_finite()) {
        return Err(SposeError::Numerical(format!(
            "non-finite similarity in ({s12}, {s13}, {s23})"
        )));
    }
    let [p12, p13, p23] = softmax3([s12, s13, s23]);
    Ok(TripletProbabilities { p12, p13, p23 })
}

#[inline]
pub(crate) fn softmax3(s: [f64; 3]) -> [f64; 3] {
    let max = s[0].max(s[1]).max(s[2]);
    let e = [(s[0] - max).exp(), (s[1] - max).exp(), (s[2] - max).exp()];
    let z = e[0] + e[1] + e[2];
    [e[0] / z, e[1] / z, e[2] / z]
}

/// `log(exp(s0) + exp(s1) + exp(s2))`, evaluated without overflow.
#[inline]
fn log_sum_exp3(s: [f64; 3]) -> f64 {
    let max = s[0].max(s[1]).max(s[2]);
    max + ((s[0] - max).exp() + (s[1] - max).exp() + (s[2] - max).exp()).ln()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pair similarities `(S_ab, S_ac, S_bc)` for a sorted triple, read from a
/// row-major `m x p` buffer.
#[inline]
pub(crate) fn pair_similarities(values: &[f64], p: usize, concepts: [usize; 3]) -> [f64; 3] {
    let row = |i: usize| &values[i * p..(i + 1) * p];
    let (a, b, c) = (row(concepts[0]), row(concepts[1]), row(concepts[2]));
    [dot(a, b), dot(a, c), dot(b, c)]
}

pub fn triplet_similarities(emb: &Embedding, concepts: [usize; 3]) -> [f64; 3] {
    let row = |i| emb.row(i);
    [
        row(concepts[0]).dot(&row(concepts[1])),
        row(concepts[0]).dot(&row(concepts[2])),
        row(concepts[1]).dot(&row(concepts[2])),
    ]
}

/// Sum of log-probabilities of the recorded choices over `judgments`.
pub(crate) fn log_likelihood_raw(values: &[f64], p: usize, judgments: &[TripletJudgment]) -> f64 {
    judgments
        .iter()
        .map(|j| {
            let s = pair_similarities(values, p, j.concepts());
            s[j.choice() as usize] - log_sum_exp3(s)
        })
        .sum()
}

fn contiguous(values: &Array2<f64>) -> std::borrow::Cow<'_, [f64]> {
    match values.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(values.iter().copied().collect()),
    }
}

/// `sum_j log Pr[recorded choice of judgment j]`; always `<= 0`.
pub fn dataset_log_likelihood(emb: &Embedding, data: &TripletDataset) -> Result<f64> {
    emb.check_covers(data)?;
    let values = contiguous(emb.values());
    Ok(log_likelihood_raw(&values, emb.n_dims(), data.judgments()))
}

/// Mean per-judgment cross-entropy, `-log-likelihood / n`. Used to rank
/// regularization strengths on a validation set.
pub fn mean_cross_entropy(emb: &Embedding, data: &TripletDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(SposeError::invalid("cross-entropy of an empty dataset"));
    }
    Ok(-dataset_log_likelihood(emb, data)? / data.len() as f64)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(SposeError::invalid(format!(
            "lambda {lambda} must be finite and >= 0"
        )))
    }
}

/// `-log-likelihood + lambda * sum_i ||x_i||_1`.
pub fn penalized_objective(emb: &Embedding, data: &TripletDataset, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let nll = -dataset_log_likelihood(emb, data)?;
    Ok(nll + lambda * emb.values().sum())
}

/// Adds the gradient of the negative log-likelihood over `judgments` into `grad`.
pub(crate) fn accumulate_nll_gradient(
    values: &[f64],
    p: usize,
    judgments: &[TripletJudgment],
    grad: &mut [f64],
) {
    for j in judgments {
        let [a, b, c] = j.concepts();
        let s = pair_similarities(values, p, [a, b, c]);
        let mut e = softmax3(s);
        // d(-log p_k)/dS_pair = p_pair - [pair == k]
        e[j.choice() as usize] -= 1.0;
        let [e_ab, e_ac, e_bc] = e;
        let (ra, rb, rc) = (a * p, b * p, c * p);
        for f in 0..p {
            let (xa, xb, xc) = (values[ra + f], values[rb + f], values[rc + f]);
            grad[ra + f] += e_ab * xb + e_ac * xc;
            grad[rb + f] += e_ab * xa + e_bc * xc;
            grad[rc + f] += e_ac * xa + e_bc * xb;
        }
    }
}

/// Gradient of `-log-likelihood(batch) + lambda * L1` with respect to every
/// embedding entry. On the non-negative orthant the penalty contributes the
/// constant `lambda`.
pub fn objective_gradient(
    emb: &Embedding,
    batch: &TripletDataset,
    lambda: f64,
) -> Result<Array2<f64>> {
    check_lambda(lambda)?;
    emb.check_covers(batch)?;
    let values = contiguous(emb.values());
    let (m, p) = emb.values().dim();
    let mut grad = vec![lambda; m * p];
    accumulate_nll_gradient(&values, p, batch.judgments(), &mut grad);
    Ok(Array2::from_shape_vec((m, p), grad).expect("shape matches buffer"))
}
