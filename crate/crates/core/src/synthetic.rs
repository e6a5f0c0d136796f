//! Ground-truth embeddings and triplet data sampled exactly from the choice model.

use std::collections::HashSet;

use ndarray::Array2;
use rand::distributions::{Distribution, Uniform};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ConceptVocabulary, Embedding, Pair, TripletDataset, TripletJudgment};
use crate::error::{Result, SposeError};
use crate::model;
use crate::rng::{self, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub embedding: Embedding,
    pub dims: usize,
    pub density: f64,
    pub scale: f64,
    pub seed: u64,
}

/// Each entry is zero with probability `1 - density`, otherwise uniform on
/// `(0, scale]`. Rows that come out all-zero are redrawn.
pub fn generate_ground_truth(
    m: usize,
    p: usize,
    density: f64,
    scale: f64,
    seed: u64,
) -> Result<GroundTruth> {
    if m < 3 {
        return Err(SposeError::invalid(format!(
            "need at least 3 concepts, got {m}"
        )));
    }
    if p == 0 {
        return Err(SposeError::invalid("need at least one dimension"));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(SposeError::invalid(format!(
            "density {density} not in (0, 1]"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(SposeError::invalid(format!(
            "scale {scale} must be positive"
        )));
    }
    let mut rng = rng::rng_for(seed, stream::TRUTH);
    let unit = Uniform::new(0.0f64, 1.0);
    let mut values = Array2::zeros((m, p));
    for mut row in values.rows_mut() {
        loop {
            for v in row.iter_mut() {
                *v = if rng.gen_bool(density) {
                    // 1 - U[0,1) lies in (0, 1]
                    scale * (1.0 - unit.sample(&mut rng))
                } else {
                    0.0
                };
            }
            if row.iter().any(|v| *v > 0.0) {
                break;
            }
        }
    }
    Ok(GroundTruth {
        embedding: Embedding::new(ConceptVocabulary::numbered(m), values)?,
        dims: p,
        density,
        scale,
        seed,
    })
}

fn n_triples(m: usize) -> u128 {
    let m = m as u128;
    if m < 3 {
        0
    } else {
        m * (m - 1) * (m - 2) / 6
    }
}

fn all_triples(concepts: &[usize]) -> Vec<[usize; 3]> {
    let mut sorted = concepts.to_vec();
    sorted.sort_unstable();
    let k = sorted.len();
    let mut out = Vec::with_capacity(n_triples(k) as usize);
    for a in 0..k {
        for b in (a + 1)..k {
            for c in (b + 1)..k {
                out.push([sorted[a], sorted[b], sorted[c]]);
            }
        }
    }
    out
}

/// `n` uniformly random triples, distinct as long as `n` does not exceed the
/// number of possible triples. Beyond that, every triple is used once per pass
/// and passes are drawn until `n` are collected.
fn draw_triples(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<[usize; 3]> {
    let total = n_triples(m);
    if (n as u128) * 2 > total {
        let all = all_triples(&(0..m).collect::<Vec<_>>());
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let mut pass = all.clone();
            pass.shuffle(rng);
            pass.truncate(n - out.len());
            out.extend(pass);
        }
        return out;
    }
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut t = [0usize; 3];
        for (slot, i) in t.iter_mut().zip(index::sample(rng, m, 3).iter()) {
            *slot = i;
        }
        t.sort_unstable();
        if seen.insert(t) {
            out.push(t);
        }
    }
    out
}

fn draw_choice(probs: [f64; 3], rng: &mut ChaCha8Rng) -> Pair {
    let u: f64 = rng.gen();
    if u < probs[0] {
        Pair::Ab
    } else if u < probs[0] + probs[1] {
        Pair::Ac
    } else {
        Pair::Bc
    }
}

fn sample_choices(
    truth: &GroundTruth,
    triples: &[[usize; 3]],
    repeats: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TripletDataset> {
    let emb = &truth.embedding;
    let mut judgments = Vec::with_capacity(triples.len() * repeats);
    for &t in triples {
        let probs = model::softmax3(model::triplet_similarities(emb, t));
        for _ in 0..repeats {
            judgments.push(TripletJudgment::new(
                t[0],
                t[1],
                t[2],
                draw_choice(probs, rng),
            )?);
        }
    }
    TripletDataset::new(emb.vocabulary().clone(), judgments)
}

/// Draws `n` distinct random triples and, for each, `repeats` independent
/// choices from the model under `truth`. Repeats of a triple are consecutive.
pub fn sample_triplets(
    truth: &GroundTruth,
    n: usize,
    seed: u64,
    repeats: usize,
) -> Result<TripletDataset> {
    let m = truth.embedding.n_concepts();
    if m < 3 {
        return Err(SposeError::invalid(format!(
            "need at least 3 concepts, got {m}"
        )));
    }
    if n == 0 || repeats == 0 {
        return Err(SposeError::invalid("n and repeats must be at least 1"));
    }
    let mut rng = rng::rng_for(seed, stream::SAMPLE);
    let triples = draw_triples(m, n, &mut rng);
    sample_choices(truth, &triples, repeats, &mut rng)
}

/// Every triple over `concepts`, each answered `repeats` times.
pub fn sample_exhaustive(
    truth: &GroundTruth,
    concepts: &[usize],
    seed: u64,
    repeats: usize,
) -> Result<TripletDataset> {
    if concepts.len() < 3 || repeats == 0 {
        return Err(SposeError::invalid("need at least 3 concepts and 1 repeat"));
    }
    for &c in concepts {
        truth.embedding.check_index(c)?;
    }
    let distinct: HashSet<_> = concepts.iter().collect();
    if distinct.len() != concepts.len() {
        return Err(SposeError::invalid("concept subset contains duplicates"));
    }
    let mut rng = rng::rng_for(seed, stream::SAMPLE);
    sample_choices(truth, &all_triples(concepts), repeats, &mut rng)
}
