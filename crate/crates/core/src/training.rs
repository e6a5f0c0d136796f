//! The fitting protocol: regularization search on a held-out split, pruning of
//! unused dimensions, and matching of dimensions between independent runs.

use std::fmt::Write as _;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::data::{split_train_validation, Embedding, TrainConfig, TripletDataset};
use crate::error::{Result, SposeError};
use crate::io::fmt_real;
use crate::model;
use crate::optim;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct GridRecord {
    pub lambda: f64,
    /// Mean per-judgment cross-entropy on the validation split.
    pub validation_cross_entropy: f64,
    /// Penalized objective on the training split at the end of training.
    pub train_objective: f64,
    /// Columns surviving the prune threshold.
    pub retained_dims: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchReport {
    pub records: Vec<GridRecord>,
    pub selected_lambda: f64,
    pub n_train: usize,
    pub n_validation: usize,
}

impl GridSearchReport {
    pub fn selected(&self) -> &GridRecord {
        self.records
            .iter()
            .find(|r| r.lambda == self.selected_lambda)
            .expect("selected lambda comes from the records")
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# selected_lambda={}", fmt_real(self.selected_lambda));
        let _ = writeln!(
            out,
            "# n_train={} n_validation={}",
            self.n_train, self.n_validation
        );
        out.push_str("lambda\tvalidation_cross_entropy\ttrain_objective\tretained_dims\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                fmt_real(r.lambda),
                fmt_real(r.validation_cross_entropy),
                fmt_real(r.train_objective),
                r.retained_dims
            );
        }
        out
    }
}

/// Index of the best record: lowest validation cross-entropy, ties toward larger lambda.
fn best_record(records: &[GridRecord]) -> usize {
    let mut best = 0;
    for (i, r) in records.iter().enumerate().skip(1) {
        let b = &records[best];
        let better = r.validation_cross_entropy < b.validation_cross_entropy
            || (r.validation_cross_entropy == b.validation_cross_entropy && r.lambda > b.lambda);
        if better {
            best = i;
        }
    }
    best
}

fn count_retained(emb: &Embedding, threshold: f64) -> usize {
    emb.values()
        .mean_axis(Axis(0))
        .map_or(0, |means| means.iter().filter(|m| **m >= threshold).count())
}

/// Grid search that also hands back the trained model of every candidate.
fn grid_search(
    data: &TripletDataset,
    config: &TrainConfig,
) -> Result<(GridSearchReport, Vec<Embedding>, TripletDataset)> {
    config.validate()?;
    let (train, validation) = split_train_validation(data, config.split_fraction, config.seed)?;
    if validation.is_empty() {
        return Err(SposeError::invalid(
            "validation split is empty; need more judgments",
        ));
    }
    let init = optim::init_embedding(data.vocabulary().clone(), config.init_dims, config.seed);
    let fitted: Vec<(GridRecord, Embedding)> = config
        .lambda_grid
        .par_iter()
        .map(|&lambda| {
            let emb = optim::run_epochs(&init, &train, lambda, config)?;
            let record = GridRecord {
                lambda,
                validation_cross_entropy: model::mean_cross_entropy(&emb, &validation)?,
                train_objective: model::penalized_objective(&emb, &train, lambda)?,
                retained_dims: count_retained(&emb, config.prune_threshold),
            };
            Ok((record, emb))
        })
        .collect::<Result<_>>()?;
    let (records, models): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let selected_lambda = records[best_record(&records)].lambda;
    let report = GridSearchReport {
        records,
        selected_lambda,
        n_train: train.len(),
        n_validation: validation.len(),
    };
    Ok((report, models, train))
}

/// Trains one model per grid value on a single shared split, all from the same
/// initialization, and picks the value with the lowest validation cross-entropy.
/// Candidates run on the current rayon pool.
pub fn select_lambda(data: &TripletDataset, config: &TrainConfig) -> Result<GridSearchReport> {
    grid_search(data, config).map(|(report, _, _)| report)
}

/// Drops every column whose mean is below `threshold` and orders the rest by
/// descending column sum. Returns the original index of each kept column.
pub fn prune_dimensions(emb: &Embedding, threshold: f64) -> Result<(Embedding, Vec<usize>)> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(SposeError::invalid(format!(
            "prune threshold {threshold} must be >= 0"
        )));
    }
    let values = emb.values();
    let m = values.nrows().max(1) as f64;
    let sums: Vec<f64> = values.sum_axis(Axis(0)).to_vec();
    let mut kept: Vec<usize> = (0..values.ncols())
        .filter(|&f| sums[f] / m >= threshold)
        .collect();
    if kept.is_empty() {
        return Err(SposeError::Degenerate(format!(
            "all {} dimensions have mean below {threshold}",
            values.ncols()
        )));
    }
    kept.sort_by(|&a, &b| sums[b].total_cmp(&sums[a]).then(a.cmp(&b)));
    let pruned = values.select(Axis(1), &kept);
    Ok((Embedding::new(emb.vocabulary().clone(), pruned)?, kept))
}

/// Grid search, then the model at the selected lambda (trained on the
/// training split), pruned.
pub fn train_full(
    data: &TripletDataset,
    config: &TrainConfig,
) -> Result<(Embedding, GridSearchReport)> {
    let (report, models, _) = grid_search(data, config)?;
    // Retraining at the selected lambda from the same initialization, split
    // and seed reproduces the grid model bit for bit, so reuse it.
    let idx = report
        .records
        .iter()
        .position(|r| r.lambda == report.selected_lambda)
        .expect("selected lambda comes from the records");
    let (pruned, _) = prune_dimensions(&models[idx], config.prune_threshold)?;
    Ok((pruned, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub dim_a: usize,
    pub dim_b: usize,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionMatchReport {
    /// In matching order (descending correlation).
    pub pairs: Vec<MatchedPair>,
    pub threshold: f64,
    pub count_above_threshold: usize,
    /// Columns with zero variance, left out of the matching.
    pub excluded_a: Vec<usize>,
    pub excluded_b: Vec<usize>,
}

impl DimensionMatchReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# threshold={} count_above_threshold={} matched={}",
            fmt_real(self.threshold),
            self.count_above_threshold,
            self.pairs.len()
        );
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let _ = writeln!(
            out,
            "# excluded_a={} excluded_b={}",
            join(&self.excluded_a),
            join(&self.excluded_b)
        );
        out.push_str("dim_a\tdim_b\tcorrelation\n");
        for p in &self.pairs {
            let _ = writeln!(out, "{}\t{}\t{}", p.dim_a, p.dim_b, fmt_real(p.correlation));
        }
        out
    }
}

fn has_variance(col: ndarray::ArrayView1<'_, f64>) -> bool {
    col.iter().any(|v| *v != col[0])
}

/// Greedy one-to-one matching of columns by Pearson correlation over concepts:
/// the highest-correlated unmatched pair is taken first, ties by lowest
/// `(dim_a, dim_b)`.
pub fn match_dimensions(
    emb_a: &Embedding,
    emb_b: &Embedding,
    threshold: f64,
) -> Result<DimensionMatchReport> {
    if emb_a.vocabulary() != emb_b.vocabulary() {
        return Err(SposeError::invalid(
            "embeddings have different vocabularies",
        ));
    }
    let cols = |e: &Embedding| -> (Vec<usize>, Vec<usize>) {
        (0..e.n_dims()).partition(|&f| has_variance(e.values().column(f)))
    };
    let (valid_a, excluded_a) = cols(emb_a);
    let (valid_b, excluded_b) = cols(emb_b);
    let column = |e: &Embedding, f: usize| e.values().column(f).to_vec();
    let a_cols: Vec<Vec<f64>> = valid_a.iter().map(|&f| column(emb_a, f)).collect();
    let b_cols: Vec<Vec<f64>> = valid_b.iter().map(|&f| column(emb_b, f)).collect();

    let mut candidates = Vec::with_capacity(valid_a.len() * valid_b.len());
    for (ia, ca) in a_cols.iter().enumerate() {
        for (ib, cb) in b_cols.iter().enumerate() {
            let r = stats::pearson(ca, cb).expect("columns have variance");
            candidates.push((r, valid_a[ia], valid_b[ib]));
        }
    }
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));

    let mut used_a = vec![false; emb_a.n_dims()];
    let mut used_b = vec![false; emb_b.n_dims()];
    let mut pairs = Vec::new();
    for (r, a, b) in candidates {
        if !used_a[a] && !used_b[b] {
            used_a[a] = true;
            used_b[b] = true;
            pairs.push(MatchedPair {
                dim_a: a,
                dim_b: b,
                correlation: r,
            });
        }
    }
    let count_above_threshold = pairs.iter().filter(|p| p.correlation >= threshold).count();
    Ok(DimensionMatchReport {
        pairs,
        threshold,
        count_above_threshold,
        excluded_a,
        excluded_b,
    })
}

/// Replaces columns `f1` and `f2` with the single column `(x1 + x2) / sqrt(2)`.
pub fn merge_dimensions(values: &Array2<f64>, f1: usize, f2: usize) -> Array2<f64> {
    let merged = (&values.column(f1) + &values.column(f2)) * std::f64::consts::FRAC_1_SQRT_2;
    let keep: Vec<usize> = (0..values.ncols())
        .filter(|&f| f != f1 && f != f2)
        .collect();
    let mut out = values.select(Axis(1), &keep);
    out.push_column(merged.view()).expect("row counts agree");
    out
}
