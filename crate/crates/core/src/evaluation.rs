//! Held-out evaluation: choice prediction, the Bayes ceiling of repeated
//! triplets, and pairwise similarity matrices.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use crate::data::{Embedding, Pair, SimilarityMatrix, TripletDataset};
use crate::error::{Result, SposeError};
use crate::model;
use crate::stats;

/// Most probable pair of a triple; ties resolve in the order `ab`, `ac`, `bc`.
/// Indices may be given in any order; the result refers to the sorted triple.
pub fn predict_choice(emb: &Embedding, triplet: (usize, usize, usize)) -> Result<Pair> {
    let mut t = [triplet.0, triplet.1, triplet.2];
    for &i in &t {
        emb.check_index(i)?;
    }
    t.sort_unstable();
    if t[0] == t[1] || t[1] == t[2] {
        return Err(SposeError::DuplicateIndex(t[1]));
    }
    Ok(argmax_pair(model::triplet_similarities(emb, t)))
}

/// Softmax is monotone, so the argmax over similarities is the argmax over probabilities.
fn argmax_pair(s: [f64; 3]) -> Pair {
    let mut best = Pair::Ab;
    for pair in [Pair::Ac, Pair::Bc] {
        if s[pair as usize] > s[best as usize] {
            best = pair;
        }
    }
    best
}

/// Fraction of judgments whose recorded choice matches [`predict_choice`].
pub fn accuracy(emb: &Embedding, data: &TripletDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(SposeError::invalid("accuracy of an empty dataset"));
    }
    emb.check_covers(data)?;
    let hits = data
        .judgments()
        .iter()
        .filter(|j| argmax_pair(model::triplet_similarities(emb, j.concepts())) == j.choice())
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Outcome counts for one unique triple `(a < b < c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripleCounts {
    pub concepts: [usize; 3],
    /// Counts for pairs `ab`, `ac`, `bc`.
    pub counts: [u64; 3],
}

impl TripleCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RepeatedTripletSet {
    triples: Vec<TripleCounts>,
}

impl RepeatedTripletSet {
    pub fn new(triples: Vec<TripleCounts>) -> Result<Self> {
        for t in &triples {
            if t.total() == 0 {
                return Err(SposeError::invalid(format!(
                    "triple {:?} has no observations",
                    t.concepts
                )));
            }
        }
        Ok(RepeatedTripletSet { triples })
    }

    /// Groups judgments by their sorted triple, in order of first appearance.
    pub fn from_dataset(data: &TripletDataset) -> Self {
        let mut slots: BTreeMap<[usize; 3], usize> = BTreeMap::new();
        let mut triples: Vec<TripleCounts> = Vec::new();
        for j in data.judgments() {
            let idx = *slots.entry(j.concepts()).or_insert_with(|| {
                triples.push(TripleCounts {
                    concepts: j.concepts(),
                    counts: [0; 3],
                });
                triples.len() - 1
            });
            triples[idx].counts[j.choice() as usize] += 1;
        }
        RepeatedTripletSet { triples }
    }

    pub fn triples(&self) -> &[TripleCounts] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Keeps triples with at least `min_total` observations.
    pub fn with_min_total(&self, min_total: u64) -> Self {
        RepeatedTripletSet {
            triples: self
                .triples
                .iter()
                .filter(|t| t.total() >= min_total)
                .copied()
                .collect(),
        }
    }
}

/// Parses `i1<TAB>i2<TAB>i3<TAB>c12<TAB>c13<TAB>c23` lines. Counts follow the
/// listed pair order and are remapped when the indices are not ascending.
pub fn read_counts(text: &str, origin: &str) -> Result<RepeatedTripletSet> {
    let err = |line: usize, message: String| SposeError::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut triples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if fields.len() != 6 {
            return Err(err(
                n,
                format!("expected 6 tab-separated fields, found {}", fields.len()),
            ));
        }
        let mut nums = [0u64; 6];
        for (slot, f) in nums.iter_mut().zip(&fields) {
            *slot = f
                .trim()
                .parse()
                .map_err(|_| err(n, format!("not a non-negative integer: {f:?}")))?;
        }
        let listed = [nums[0] as usize, nums[1] as usize, nums[2] as usize];
        let mut counts = [0u64; 3];
        let mut concepts = [0usize; 3];
        for (k, pair) in Pair::ALL.iter().enumerate() {
            let j = crate::data::TripletJudgment::new(listed[0], listed[1], listed[2], *pair)
                .map_err(|e| err(n, e.to_string()))?;
            concepts = j.concepts();
            counts[j.choice() as usize] += nums[3 + k];
        }
        let t = TripleCounts { concepts, counts };
        if t.total() == 0 {
            return Err(err(n, "triple has no observations".into()));
        }
        triples.push(t);
    }
    RepeatedTripletSet::new(triples)
}

pub fn load_counts(path: &Path) -> Result<RepeatedTripletSet> {
    let text = std::fs::read_to_string(path).map_err(|e| SposeError::io(path, e))?;
    read_counts(&text, &path.display().to_string())
}

pub fn write_counts(set: &RepeatedTripletSet) -> String {
    let mut out = String::new();
    for t in set.triples() {
        let [a, b, c] = t.concepts;
        let [x, y, z] = t.counts;
        out.push_str(&format!("{a}\t{b}\t{c}\t{x}\t{y}\t{z}\n"));
    }
    out
}

/// Mean over triples of the majority outcome's share of responses.
pub fn bayes_ceiling(repeats: &RepeatedTripletSet) -> Result<f64> {
    if repeats.is_empty() {
        return Err(SposeError::invalid("Bayes ceiling of an empty set"));
    }
    let sum: f64 = repeats
        .triples()
        .iter()
        .map(|t| *t.counts.iter().max().expect("three counts") as f64 / t.total() as f64)
        .sum();
    Ok(sum / repeats.len() as f64)
}

fn check_subset(subset: &[usize], size: usize) -> Result<Vec<Option<usize>>> {
    if subset.len() < 2 {
        return Err(SposeError::invalid(
            "similarity subset needs at least 2 concepts",
        ));
    }
    let mut position = vec![None; size];
    for (k, &c) in subset.iter().enumerate() {
        let slot = position
            .get_mut(c)
            .ok_or(SposeError::IndexOutOfRange { index: c, size })?;
        if slot.is_some() {
            return Err(SposeError::invalid(format!(
                "concept {c} listed twice in subset"
            )));
        }
        *slot = Some(k);
    }
    Ok(position)
}

/// `S_AB` = (judgments choosing pair A,B) / (judgments containing both A and B),
/// undefined where A and B never co-occur.
pub fn empirical_similarity(data: &TripletDataset, subset: &[usize]) -> Result<SimilarityMatrix> {
    let position = check_subset(subset, data.vocabulary().len())?;
    let k = subset.len();
    let mut chosen = Array2::<u64>::zeros((k, k));
    let mut seen = Array2::<u64>::zeros((k, k));
    for j in data.judgments() {
        let concepts = j.concepts();
        for pair in Pair::ALL {
            let (p, q) = pair.positions();
            if let (Some(a), Some(b)) = (position[concepts[p]], position[concepts[q]]) {
                seen[[a, b]] += 1;
                seen[[b, a]] += 1;
                if pair == j.choice() {
                    chosen[[a, b]] += 1;
                    chosen[[b, a]] += 1;
                }
            }
        }
    }
    let values = Array2::from_shape_fn((k, k), |(a, b)| {
        (a != b && seen[[a, b]] > 0).then(|| chosen[[a, b]] as f64 / seen[[a, b]] as f64)
    });
    SimilarityMatrix::new(data.vocabulary().subset(subset)?, values)
}

/// `S_AB` = mean over third concepts C in `pool` (C not A or B) of the model
/// probability that A and B are paired in the triplet `{A, B, C}`.
pub fn model_similarity(
    emb: &Embedding,
    subset: &[usize],
    third_party_pool: &[usize],
) -> Result<SimilarityMatrix> {
    check_subset(subset, emb.n_concepts())?;
    for &c in third_party_pool {
        emb.check_index(c)?;
    }
    let k = subset.len();
    let gram = emb.values().dot(&emb.values().t());
    let mut values = Array2::from_elem((k, k), None);
    for a in 0..k {
        for b in (a + 1)..k {
            let (ia, ib) = (subset[a], subset[b]);
            let s_ab = gram[[ia, ib]];
            let mut sum = 0.0;
            let mut count = 0usize;
            for &ic in third_party_pool {
                if ic == ia || ic == ib {
                    continue;
                }
                let probs = model::softmax3([s_ab, gram[[ia, ic]], gram[[ib, ic]]]);
                sum += probs[0];
                count += 1;
            }
            if count == 0 {
                return Err(SposeError::invalid(format!(
                    "no third concept available for pair ({ia}, {ib})"
                )));
            }
            values[[a, b]] = Some(sum / count as f64);
            values[[b, a]] = values[[a, b]];
        }
    }
    SimilarityMatrix::new(emb.vocabulary().subset(subset)?, values)
}

/// Pearson correlation between the upper-triangle entries defined in both matrices.
pub fn offdiag_pearson(a: &SimilarityMatrix, b: &SimilarityMatrix) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SposeError::Shape(format!(
            "matrices of size {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            if let (Some(x), Some(y)) = (a.get(i, j), b.get(i, j)) {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    if xs.len() < 2 {
        return Err(SposeError::invalid("fewer than 2 jointly defined entries"));
    }
    stats::pearson(&xs, &ys)
        .ok_or_else(|| SposeError::Numerical("zero variance in similarity entries".into()))
}
