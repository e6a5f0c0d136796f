//! Analyses of a learned embedding against external concept data: feature
//! prediction, interpretability regressions, typicality and category
//! classification.

mod logistic;
mod nnls;

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::data::{ConceptVocabulary, Embedding, FeatureTable};
use crate::error::{Result, SposeError};
use crate::rng::{self, stream};
use crate::stats;

pub use logistic::{
    fit_logistic, logistic_feature_auc, logistic_objective, FeatureAuc, LogisticModel,
};
pub use nnls::{fit_nnls, nnls_explain, nnls_objective, DimensionExplanation, NnlsModel};

/// Log-spaced grid of `n` values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidationPlan {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub regularization_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for CrossValidationPlan {
    fn default() -> Self {
        CrossValidationPlan {
            outer_folds: 10,
            inner_folds: 10,
            regularization_grid: log_grid(1e-4, 1e2, 10),
            seed: 0,
        }
    }
}

impl CrossValidationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return Err(SposeError::invalid(
                "cross-validation needs at least 2 folds",
            ));
        }
        if self.regularization_grid.is_empty()
            || self
                .regularization_grid
                .iter()
                .any(|a| !(*a > 0.0 && a.is_finite()))
        {
            return Err(SposeError::invalid(
                "regularization grid must be non-empty and positive",
            ));
        }
        Ok(())
    }
}

/// Assigns each of `n` items to one of `k` folds: a seeded shuffle dealt round robin.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || n < k {
        return Err(SposeError::invalid(format!(
            "cannot split {n} items into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng_for(seed, stream::FOLDS));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

/// Like [`fold_assignment`] but deals positives and negatives separately so
/// every fold gets a share of each class.
pub fn stratified_fold_assignment(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    if k < 2 || n < k {
        return Err(SposeError::invalid(format!(
            "cannot split {n} items into {k} folds"
        )));
    }
    let mut rng = rng::rng_for(seed, stream::FOLDS);
    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![0; n];
    for (slot, &i) in pos.iter().chain(&neg).enumerate() {
        folds[i] = slot % k;
    }
    Ok(folds)
}

pub(crate) fn split_indices(folds: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&i| folds[i] != fold)
}

/// Column standardization fitted on one set of rows and applied to others.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
        let scale = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(c, m)| {
                let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (f, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.mean[f]) / self.scale[f]);
        }
        out
    }
}

/// Rows of `emb` and `table` for the concepts both contain, in table order.
pub(crate) fn align(
    emb: &Embedding,
    table: &FeatureTable,
) -> Result<(Vec<String>, Array2<f64>, Array2<f64>)> {
    let mut names = Vec::new();
    let mut emb_rows = Vec::new();
    let mut table_rows = Vec::new();
    for (t, name) in table.vocabulary().names().iter().enumerate() {
        if let Some(e) = emb.vocabulary().index_of(name) {
            names.push(name.clone());
            emb_rows.push(e);
            table_rows.push(t);
        }
    }
    if names.is_empty() {
        return Err(SposeError::invalid(
            "embedding and feature table share no concepts",
        ));
    }
    Ok((
        names,
        emb.values().select(Axis(0), &emb_rows),
        table.values().select(Axis(0), &table_rows),
    ))
}

/// Category of each labeled concept.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryLabeling {
    labels: BTreeMap<usize, String>,
}

impl CategoryLabeling {
    pub fn new(labels: impl IntoIterator<Item = (usize, String)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (concept, category) in labels {
            if category.is_empty() {
                return Err(SposeError::invalid(format!(
                    "concept {concept} has an empty category"
                )));
            }
            if map.insert(concept, category).is_some() {
                return Err(SposeError::invalid(format!(
                    "concept {concept} labeled twice"
                )));
            }
        }
        Ok(CategoryLabeling { labels: map })
    }

    /// Resolves `(name, category)` pairs against a vocabulary.
    pub fn from_names(vocab: &ConceptVocabulary, pairs: &[(String, String)]) -> Result<Self> {
        let resolved = pairs
            .iter()
            .map(|(name, cat)| {
                vocab
                    .index_of(name)
                    .map(|i| (i, cat.clone()))
                    .ok_or_else(|| SposeError::invalid(format!("unknown concept {name:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(resolved)
    }

    pub fn category(&self, concept: usize) -> Option<&str> {
        self.labels.get(&concept).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Members of each category, ascending.
    pub fn categories(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (&c, cat) in &self.labels {
            out.entry(cat.as_str()).or_default().push(c);
        }
        out
    }
}

/// Dot product of each member's vector with the category centroid.
pub fn typicality_scores(emb: &Embedding, category_members: &[usize]) -> Result<Vec<f64>> {
    if category_members.is_empty() {
        return Err(SposeError::invalid("empty category"));
    }
    if category_members.len() < 2 {
        return Err(SposeError::invalid(
            "typicality needs at least 2 category members",
        ));
    }
    for &i in category_members {
        emb.check_index(i)?;
    }
    let rows = emb.values().select(Axis(0), category_members);
    let centroid = rows.mean_axis(Axis(0)).expect("non-empty");
    Ok(rows.dot(&centroid).to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryTypicality {
    pub category: String,
    /// Members that have a norm value.
    pub n: usize,
    /// Pearson correlation between scores and norms; `None` when undefined.
    pub correlation: Option<f64>,
}

/// Correlates typicality scores with external norms, per category.
/// Returns the per-category results and the median over defined correlations.
pub fn typicality_correlations(
    emb: &Embedding,
    labels: &CategoryLabeling,
    norms: &BTreeMap<usize, f64>,
) -> Result<(Vec<CategoryTypicality>, Option<f64>)> {
    let mut out = Vec::new();
    for (cat, members) in labels.categories() {
        if members.len() < 2 {
            out.push(CategoryTypicality {
                category: cat.to_string(),
                n: 0,
                correlation: None,
            });
            continue;
        }
        let scores = typicality_scores(emb, &members)?;
        let (xs, ys): (Vec<f64>, Vec<f64>) = members
            .iter()
            .zip(&scores)
            .filter_map(|(c, s)| norms.get(c).map(|n| (*s, *n)))
            .unzip();
        out.push(CategoryTypicality {
            category: cat.to_string(),
            n: xs.len(),
            correlation: stats::pearson(&xs, &ys),
        });
    }
    let defined: Vec<f64> = out.iter().filter_map(|c| c.correlation).collect();
    Ok((out, stats::median(&defined)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub n_evaluated: usize,
    /// Labeled concepts with all-zero vectors, left out.
    pub excluded_zero_norm: Vec<usize>,
}

/// Leave-one-out nearest-neighbor classification by cosine similarity among
/// labeled concepts. Ties go to the lowest concept index.
pub fn nn_category_accuracy(
    emb: &Embedding,
    labels: &CategoryLabeling,
) -> Result<ClassificationReport> {
    for (cat, members) in labels.categories() {
        if members.len() < 2 {
            return Err(SposeError::invalid(format!(
                "category {cat:?} has fewer than 2 members"
            )));
        }
    }
    let mut valid = Vec::new();
    let mut excluded = Vec::new();
    for &c in labels.labels.keys() {
        emb.check_index(c)?;
        let norm = emb.row(c).dot(&emb.row(c)).sqrt();
        if norm > 0.0 {
            valid.push((c, norm));
        } else {
            excluded.push(c);
        }
    }
    if valid.len() < 2 {
        return Err(SposeError::invalid(
            "fewer than 2 labeled concepts with non-zero vectors",
        ));
    }
    let mut correct = 0;
    for &(c, nc) in &valid {
        let mut best: Option<(f64, usize)> = None;
        for &(d, nd) in &valid {
            if d == c {
                continue;
            }
            let cos = emb.row(c).dot(&emb.row(d)) / (nc * nd);
            if best.is_none_or(|(b, _)| cos > b) {
                best = Some((cos, d));
            }
        }
        let (_, nn) = best.expect("at least one other concept");
        if labels.category(nn) == labels.category(c) {
            correct += 1;
        }
    }
    Ok(ClassificationReport {
        accuracy: correct as f64 / valid.len() as f64,
        n_evaluated: valid.len(),
        excluded_zero_norm: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn emb(values: Array2<f64>) -> Embedding {
        Embedding::new(ConceptVocabulary::numbered(values.nrows()), values).unwrap()
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-4, 1e2, 10);
        assert_eq!(g.len(), 10);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert!((g[9] - 1e2).abs() < 1e-10);
    }

    #[test]
    fn folds_partition_items() {
        let f = fold_assignment(23, 10, 4).unwrap();
        for k in 0..10 {
            let n = f.iter().filter(|&&x| x == k).count();
            assert!(n == 2 || n == 3);
        }
        assert!(fold_assignment(3, 10, 0).is_err());
        let labels: Vec<bool> = (0..30).map(|i| i % 5 == 0).collect();
        let s = stratified_fold_assignment(&labels, 3, 1).unwrap();
        for k in 0..3 {
            assert_eq!((0..30).filter(|&i| s[i] == k && labels[i]).count(), 2);
        }
    }

    #[test]
    fn typicality_examples() {
        let e = emb(array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        let s = typicality_scores(&e, &[0, 1, 2]).unwrap();
        assert!(s.iter().all(|v| *v == s[0]));
        let e = emb(array![[1.0, 0.0], [0.0, 1.0], [3.0, 3.0]]);
        let s = typicality_scores(&e, &[0, 1, 2]).unwrap();
        assert!(s[2] > s[0] && s[2] > s[1]);
        assert!(typicality_scores(&e, &[]).is_err());
    }

    #[test]
    fn block_one_hot_is_perfectly_classified() {
        let mut v = Array2::zeros((12, 3));
        let mut labels = Vec::new();
        for i in 0..12 {
            v[[i, i % 3]] = 1.0 + i as f64;
            labels.push((i, format!("cat{}", i % 3)));
        }
        let labels = CategoryLabeling::new(labels).unwrap();
        let r = nn_category_accuracy(&emb(v), &labels).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.n_evaluated, 12);
    }

    #[test]
    fn zero_vectors_are_excluded() {
        let e = emb(array![
            [1.0, 0.0],
            [2.0, 0.0],
            [0.0, 0.0],
            [0.0, 1.0],
            [0.0, 3.0]
        ]);
        let labels = CategoryLabeling::new(vec![
            (0, "a".into()),
            (1, "a".into()),
            (2, "a".into()),
            (3, "b".into()),
            (4, "b".into()),
        ])
        .unwrap();
        let r = nn_category_accuracy(&e, &labels).unwrap();
        assert_eq!(r.excluded_zero_norm, vec![2]);
        assert_eq!(r.accuracy, 1.0);
        let singleton =
            CategoryLabeling::new(vec![(0, "a".into()), (1, "b".into()), (3, "b".into())]).unwrap();
        assert!(nn_category_accuracy(&e, &singleton).is_err());
        assert!(CategoryLabeling::new(vec![(0, "a".into()), (0, "b".into())]).is_err());
    }

    #[test]
    fn typicality_correlation_with_norms() {
        let e = emb(array![
            [1.0, 0.0],
            [2.0, 0.0],
            [3.0, 0.0],
            [0.0, 1.0],
            [0.0, 2.0]
        ]);
        let labels = CategoryLabeling::new(vec![
            (0, "a".into()),
            (1, "a".into()),
            (2, "a".into()),
            (3, "b".into()),
            (4, "b".into()),
        ])
        .unwrap();
        let norms: BTreeMap<usize, f64> = [(0, 1.0), (1, 2.0), (2, 3.0), (3, 5.0), (4, 1.0)].into();
        let (per, median) = typicality_correlations(&e, &labels, &norms).unwrap();
        assert!(per[0].correlation.unwrap() > 0.99);
        assert!((per[1].correlation.unwrap() + 1.0).abs() < 1e-12);
        assert!(median.is_some());
    }

    fn matrix(m: usize, p: usize) -> impl Strategy<Value = Array2<f64>> {
        proptest::collection::vec(0.0f64..3.0, m * p)
            .prop_map(move |v| Array2::from_shape_vec((m, p), v).unwrap())
    }

    proptest! {
        #[test]
        fn typicality_rank_survives_scaling(x in matrix(6, 3), c in 0.1f64..10.0) {
            let members: Vec<usize> = (0..6).collect();
            let a = typicality_scores(&emb(x.clone()), &members).unwrap();
            let b = typicality_scores(&emb(x * c), &members).unwrap();
            prop_assert_eq!(stats::midranks(&a), stats::midranks(&b));
        }

        #[test]
        fn classification_ignores_vector_scale(x in matrix(10, 3), scales in proptest::collection::vec(0.1f64..10.0, 10)) {
            let labels = CategoryLabeling::new((0..10).map(|i| (i, format!("{}", i % 2)))).unwrap();
            let mut y = x.clone();
            for (mut row, s) in y.rows_mut().into_iter().zip(&scales) {
                row *= *s;
            }
            let a = nn_category_accuracy(&emb(x), &labels);
            let b = nn_category_accuracy(&emb(y), &labels);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert!((a.accuracy - b.accuracy).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }
    }
}
