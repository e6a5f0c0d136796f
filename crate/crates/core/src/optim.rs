//! Projected Adam over mini-batches of triplets.

use ndarray::Array2;
use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ConceptVocabulary, Embedding, TrainConfig, TripletDataset};
use crate::error::{Result, SposeError};
use crate::model;
use crate::rng::{self, stream};

/// Upper bound of the uniform initialization range.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Array2<f64>,
    pub v: Array2<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(shape: (usize, usize), learning_rate: f64) -> Self {
        AdamState {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    /// One bias-corrected Adam update followed by clamping at zero, in place.
    pub fn step(&mut self, weights: &mut Array2<f64>, grad: &Array2<f64>) -> Result<()> {
        if weights.dim() != grad.dim() || weights.dim() != self.m.dim() {
            return Err(SposeError::Shape(format!(
                "weights {:?}, gradient {:?}, state {:?}",
                weights.dim(),
                grad.dim(),
                self.m.dim()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(SposeError::Numerical("non-finite gradient entry".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        ndarray::Zip::from(weights)
            .and(grad)
            .and(&mut self.m)
            .and(&mut self.v)
            .for_each(|w, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w = (*w - lr * m_hat / (v_hat.sqrt() + eps)).max(0.0);
            });
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    weights: &Array2<f64>,
    grad: &Array2<f64>,
    mut state: AdamState,
) -> Result<(Array2<f64>, AdamState)> {
    let mut w = weights.clone();
    state.step(&mut w, grad)?;
    Ok((w, state))
}

/// Entries i.i.d. uniform on `[0, INIT_SCALE]`.
pub fn init_embedding(vocabulary: ConceptVocabulary, dims: usize, seed: u64) -> Embedding {
    let mut rng = rng::rng_for(seed, stream::INIT);
    let dist = Uniform::new_inclusive(0.0, INIT_SCALE);
    let m = vocabulary.len();
    let values = Array2::from_shape_simple_fn((m, dims), || dist.sample(&mut rng));
    Embedding::new(vocabulary, values).expect("uniform draws are non-negative")
}

/// Runs `config.epochs` passes of projected Adam over `train`.
///
/// Each mini-batch gradient is the summed negative log-likelihood gradient of
/// its judgments plus `lambda * batch_len / n_train`, so that one epoch of
/// batch gradients adds up to the gradient of `penalized_objective(train, lambda)`.
/// Batch order is reshuffled every epoch from `(config.seed, epoch)`.
pub fn run_epochs(
    emb: &Embedding,
    train: &TripletDataset,
    lambda: f64,
    config: &TrainConfig,
) -> Result<Embedding> {
    run_epochs_with(emb, train, lambda, config, |_, _| {})
}

/// [`run_epochs`] with a callback invoked after every epoch with the epoch
/// index and current weights.
pub fn run_epochs_with(
    emb: &Embedding,
    train: &TripletDataset,
    lambda: f64,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &Array2<f64>),
) -> Result<Embedding> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SposeError::invalid(format!(
            "lambda {lambda} must be finite and >= 0"
        )));
    }
    if config.batch_size == 0 || config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(SposeError::invalid(
            "batch size and learning rate must be positive",
        ));
    }
    emb.check_covers(train)?;
    let (m, p) = emb.values().dim();
    let mut weights = emb.values().as_standard_layout().into_owned();
    if config.epochs == 0 || train.is_empty() {
        return Ok(emb.clone());
    }

    let n = train.len();
    let judgments = train.judgments();
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut state = AdamState::new((m, p), config.learning_rate);
    let mut grad = Array2::<f64>::zeros((m, p));
    let shuffle_seed = rng::derive_seed(config.seed, stream::SHUFFLE);

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(rng::derive_seed(shuffle_seed, epoch as u64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| judgments[i]));
            let penalty = lambda * chunk.len() as f64 / n as f64;
            grad.fill(penalty);
            model::accumulate_nll_gradient(
                weights.as_slice().expect("standard layout"),
                p,
                &batch,
                grad.as_slice_mut().expect("standard layout"),
            );
            state.step(&mut weights, &grad)?;
        }
        on_epoch(epoch, &weights);
    }
    Embedding::new(emb.vocabulary().clone(), weights)
}
