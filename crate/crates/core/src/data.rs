//! Core domain types: vocabularies, triplet judgments, embeddings, similarity
//! matrices and feature tables.

use std::collections::HashMap;
use std::fmt;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;

use crate::error::{Result, SposeError};
use crate::rng;

/// Ordered list of unique concept names. A concept's index is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ConceptVocabulary {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(SposeError::invalid(format!(
                    "concept {i} has an empty name"
                )));
            }
            if name.contains(['\t', '\n', '\r']) {
                return Err(SposeError::invalid(format!(
                    "concept name {name:?} contains a tab or newline"
                )));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(SposeError::invalid(format!(
                    "duplicate concept name {name:?}"
                )));
            }
        }
        Ok(ConceptVocabulary { names, index })
    }

    /// Vocabulary `c0, c1, ..., c{m-1}`.
    pub fn numbered(m: usize) -> Self {
        Self::new((0..m).map(|i| format!("c{i}"))).expect("generated names are unique")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Sub-vocabulary in the order of `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let names = indices
            .iter()
            .map(|&i| {
                self.names
                    .get(i)
                    .cloned()
                    .ok_or(SposeError::IndexOutOfRange {
                        index: i,
                        size: self.len(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(names)
    }
}

/// One of the three unordered pairs of a canonically sorted triple `(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pair {
    Ab = 0,
    Ac = 1,
    Bc = 2,
}

impl Pair {
    pub const ALL: [Pair; 3] = [Pair::Ab, Pair::Ac, Pair::Bc];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Pair> {
        match code {
            0 => Some(Pair::Ab),
            1 => Some(Pair::Ac),
            2 => Some(Pair::Bc),
            _ => None,
        }
    }

    /// Positions within the triple of the two pair members.
    pub fn positions(self) -> (usize, usize) {
        match self {
            Pair::Ab => (0, 1),
            Pair::Ac => (0, 2),
            Pair::Bc => (1, 2),
        }
    }

    /// The position left out of the pair (the odd one out).
    pub fn odd_position(self) -> usize {
        match self {
            Pair::Ab => 2,
            Pair::Ac => 1,
            Pair::Bc => 0,
        }
    }
}

/// Three distinct concept indices in ascending order plus the pair judged most similar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TripletJudgment {
    concepts: [usize; 3],
    choice: Pair,
}

impl TripletJudgment {
    /// Builds a judgment from indices in presentation order. `choice` refers to
    /// the listed pairs `(i1,i2)`, `(i1,i3)`, `(i2,i3)` and is remapped onto the
    /// sorted triple.
    pub fn new(i1: usize, i2: usize, i3: usize, choice: Pair) -> Result<Self> {
        let listed = [i1, i2, i3];
        let (p, q) = choice.positions();
        let (x, y) = (listed[p], listed[q]);
        let mut concepts = listed;
        concepts.sort_unstable();
        if concepts[0] == concepts[1] {
            return Err(SposeError::DuplicateIndex(concepts[0]));
        }
        if concepts[1] == concepts[2] {
            return Err(SposeError::DuplicateIndex(concepts[1]));
        }
        Ok(TripletJudgment {
            concepts,
            choice: pair_of(concepts, x, y),
        })
    }

    pub fn concepts(&self) -> [usize; 3] {
        self.concepts
    }

    pub fn choice(&self) -> Pair {
        self.choice
    }

    /// Concept indices of the chosen pair.
    pub fn chosen(&self) -> (usize, usize) {
        let (p, q) = self.choice.positions();
        (self.concepts[p], self.concepts[q])
    }

    pub fn max_index(&self) -> usize {
        self.concepts[2]
    }
}

/// Which pair of the sorted triple `concepts` contains `x` and `y`.
fn pair_of(concepts: [usize; 3], x: usize, y: usize) -> Pair {
    let odd = concepts
        .iter()
        .position(|&c| c != x && c != y)
        .expect("pair members come from the triple");
    match odd {
        2 => Pair::Ab,
        1 => Pair::Ac,
        _ => Pair::Bc,
    }
}

impl fmt::Display for TripletJudgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.concepts;
        write!(f, "{a}\t{b}\t{c}\t{}", self.choice.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletDataset {
    vocabulary: ConceptVocabulary,
    judgments: Vec<TripletJudgment>,
}

impl TripletDataset {
    pub fn new(vocabulary: ConceptVocabulary, judgments: Vec<TripletJudgment>) -> Result<Self> {
        let size = vocabulary.len();
        if let Some(j) = judgments.iter().find(|j| j.max_index() >= size) {
            return Err(SposeError::IndexOutOfRange {
                index: j.max_index(),
                size,
            });
        }
        Ok(TripletDataset {
            vocabulary,
            judgments,
        })
    }

    pub fn vocabulary(&self) -> &ConceptVocabulary {
        &self.vocabulary
    }

    pub fn judgments(&self) -> &[TripletJudgment] {
        &self.judgments
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    /// Same vocabulary, different judgments. Indices are trusted to be valid.
    pub(crate) fn with_judgments(&self, judgments: Vec<TripletJudgment>) -> Self {
        TripletDataset {
            vocabulary: self.vocabulary.clone(),
            judgments,
        }
    }

    /// Drops every judgment containing two or more concepts of `held_out`.
    pub fn filter_holdout(&self, held_out: &[usize]) -> Self {
        let mut mask = vec![false; self.vocabulary.len()];
        for &i in held_out {
            if let Some(m) = mask.get_mut(i) {
                *m = true;
            }
        }
        let kept = self
            .judgments
            .iter()
            .filter(|j| j.concepts.iter().filter(|&&c| mask[c]).count() < 2)
            .copied()
            .collect();
        self.with_judgments(kept)
    }
}

/// Shuffles deterministically under `seed` and cuts after `floor(fraction * n)`
/// judgments: the head is the training set, the tail the validation set.
pub fn split_train_validation(
    data: &TripletDataset,
    split_fraction: f64,
    seed: u64,
) -> Result<(TripletDataset, TripletDataset)> {
    if data.is_empty() {
        return Err(SposeError::invalid("cannot split an empty dataset"));
    }
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(SposeError::invalid(format!(
            "split fraction {split_fraction} not in (0, 1)"
        )));
    }
    let mut shuffled = data.judgments.clone();
    shuffled.shuffle(&mut rng::rng_for(seed, rng::stream::SPLIT));
    let n_train = (split_fraction * data.len() as f64).floor() as usize;
    let validation = shuffled.split_off(n_train);
    Ok((
        data.with_judgments(shuffled),
        data.with_judgments(validation),
    ))
}

/// Non-negative concept-by-dimension matrix; row `i` is the vector of concept `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vocabulary: ConceptVocabulary,
    values: Array2<f64>,
}

impl Embedding {
    pub fn new(vocabulary: ConceptVocabulary, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != vocabulary.len() {
            return Err(SposeError::Shape(format!(
                "embedding has {} rows but vocabulary has {} concepts",
                values.nrows(),
                vocabulary.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(SposeError::invalid(format!(
                "embedding entries must be finite and non-negative, found {v}"
            )));
        }
        Ok(Embedding { vocabulary, values })
    }

    pub fn vocabulary(&self) -> &ConceptVocabulary {
        &self.vocabulary
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn n_concepts(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, concept: usize) -> ArrayView1<'_, f64> {
        self.values.row(concept)
    }

    pub(crate) fn check_index(&self, index: usize) -> Result<()> {
        if index < self.n_concepts() {
            Ok(())
        } else {
            Err(SposeError::IndexOutOfRange {
                index,
                size: self.n_concepts(),
            })
        }
    }

    /// Errors unless every judgment in `data` refers to a row of this embedding.
    pub(crate) fn check_covers(&self, data: &TripletDataset) -> Result<()> {
        match data.judgments.iter().map(|j| j.max_index()).max() {
            Some(max) => self.check_index(max),
            None => Ok(()),
        }
    }
}

/// Hyperparameters of a full fitting run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda_grid: Vec<f64>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub init_dims: usize,
    /// Columns whose mean value falls below this are pruned.
    pub prune_threshold: f64,
    /// Share of judgments used for training.
    pub split_fraction: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_grid: (0..=15).map(|k| 0.0070 + 0.0002 * k as f64).collect(),
            epochs: 1000,
            learning_rate: 0.001,
            init_dims: 90,
            prune_threshold: 0.02,
            split_fraction: 0.9,
            batch_size: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(SposeError::invalid("lambda grid is empty"));
        }
        if let Some(l) = self
            .lambda_grid
            .iter()
            .find(|l| !(**l >= 0.0 && l.is_finite()))
        {
            return Err(SposeError::invalid(format!(
                "lambda {l} must be finite and >= 0"
            )));
        }
        if self.epochs == 0 {
            return Err(SposeError::invalid("epochs must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SposeError::invalid("learning rate must be positive"));
        }
        if self.init_dims == 0 {
            return Err(SposeError::invalid("init_dims must be positive"));
        }
        if self.prune_threshold.is_nan() || self.prune_threshold < 0.0 {
            return Err(SposeError::invalid("prune threshold must be >= 0"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(SposeError::invalid("split fraction must lie in (0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(SposeError::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

/// Symmetric matrix over a (sub-)vocabulary. `None` marks undefined entries;
/// the diagonal is always undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    vocabulary: ConceptVocabulary,
    values: Array2<Option<f64>>,
}

impl SimilarityMatrix {
    pub fn new(vocabulary: ConceptVocabulary, mut values: Array2<Option<f64>>) -> Result<Self> {
        let m = vocabulary.len();
        if values.dim() != (m, m) {
            return Err(SposeError::Shape(format!(
                "similarity matrix is {:?}, vocabulary has {m} concepts",
                values.dim()
            )));
        }
        for i in 0..m {
            values[[i, i]] = None;
            for j in (i + 1)..m {
                if values[[i, j]] != values[[j, i]] {
                    return Err(SposeError::invalid(format!(
                        "similarity matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(SimilarityMatrix { vocabulary, values })
    }

    pub fn vocabulary(&self) -> &ConceptVocabulary {
        &self.vocabulary
    }

    pub fn values(&self) -> &Array2<Option<f64>> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[[i, j]]
    }
}

/// Per-concept feature matrix used as regression targets or predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    vocabulary: ConceptVocabulary,
    feature_names: Vec<String>,
    values: Array2<f64>,
}

impl FeatureTable {
    pub fn new(
        vocabulary: ConceptVocabulary,
        feature_names: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        if values.dim() != (vocabulary.len(), feature_names.len()) {
            return Err(SposeError::Shape(format!(
                "feature values are {:?}, expected ({}, {})",
                values.dim(),
                vocabulary.len(),
                feature_names.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &feature_names {
            if name.is_empty() || name.contains(['\t', '\n', '\r']) {
                return Err(SposeError::invalid(format!("bad feature name {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(SposeError::invalid(format!(
                    "duplicate feature name {name:?}"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SposeError::invalid("feature values must be finite"));
        }
        Ok(FeatureTable {
            vocabulary,
            feature_names,
            values,
        })
    }

    pub fn vocabulary(&self) -> &ConceptVocabulary {
        &self.vocabulary
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Keeps the `k` features with the most positive entries (ties by column order).
    pub fn densest(&self, k: usize) -> Self {
        let mut order: Vec<usize> = (0..self.n_features()).collect();
        let density: Vec<usize> = self
            .values
            .columns()
            .into_iter()
            .map(|c| c.iter().filter(|v| **v > 0.0).count())
            .collect();
        order.sort_by(|&a, &b| density[b].cmp(&density[a]).then(a.cmp(&b)));
        order.truncate(k);
        order.sort_unstable();
        FeatureTable {
            vocabulary: self.vocabulary.clone(),
            feature_names: order
                .iter()
                .map(|&f| self.feature_names[f].clone())
                .collect(),
            values: self.values.select(ndarray::Axis(1), &order),
        }
    }
}
