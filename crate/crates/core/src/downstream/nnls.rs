//! Non-negative, L1-penalized least squares by cyclic coordinate descent.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::{align, fold_assignment, split_indices, CrossValidationPlan, Standardizer};
use crate::data::{Embedding, FeatureTable};
use crate::error::{Result, SposeError};
use crate::rng;
use crate::stats;

const COORD_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 100_000;

/// Weights and intercept on the original predictor scale.
#[derive(Debug, Clone, PartialEq)]
pub struct NnlsModel {
    pub weights: Array1<f64>,
    pub intercept: f64,
    pub sweeps: usize,
    pub converged: bool,
}

impl NnlsModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.dot(&self.weights) + self.intercept
    }
}

/// `1/(2n) ||y - b - x w||^2 + alpha * sum(w)` over `w >= 0`, `b` free.
pub fn nnls_objective(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    alpha: f64,
    w: ArrayView1<'_, f64>,
    b: f64,
) -> f64 {
    let r = &y - &(x.dot(&w) + b);
    r.dot(&r) / (2.0 * y.len() as f64) + alpha * w.sum()
}

/// Solves the penalized problem on `x` as given (no standardization).
/// Columns are centered internally so the intercept decouples from the weights.
pub fn fit_nnls(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, alpha: f64) -> Result<NnlsModel> {
    let (n, p) = x.dim();
    if n != y.len() || n == 0 {
        return Err(SposeError::Shape(format!("{n} rows, {} targets", y.len())));
    }
    if alpha.is_nan() || alpha < 0.0 {
        return Err(SposeError::invalid("NNLS penalty must be >= 0"));
    }
    let nf = n as f64;
    let means = x.mean_axis(Axis(0)).expect("n > 0");
    let xc = &x - &means;
    let y_mean = y.mean().expect("n > 0");
    let col_sq: Vec<f64> = xc.columns().into_iter().map(|c| c.dot(&c) / nf).collect();
    let mut w = Array1::<f64>::zeros(p);
    let mut resid = &y - y_mean;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = xc.column(j);
            let rho = col.dot(&resid) / nf + w[j] * col_sq[j];
            let new = ((rho - alpha) / col_sq[j]).max(0.0);
            let delta = new - w[j];
            if delta != 0.0 {
                resid.scaled_add(-delta, &col);
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < COORD_TOL {
            converged = true;
            break;
        }
    }
    let intercept = y_mean - means.dot(&w);
    Ok(NnlsModel {
        weights: w,
        intercept,
        sweeps,
        converged,
    })
}

/// Fits on standardized predictors and maps the solution back to the original scale.
fn fit_standardized(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    alpha: f64,
) -> Result<NnlsModel> {
    let scaler = Standardizer::fit(x);
    let z = scaler.apply(x);
    let fit = fit_nnls(z.view(), y, alpha)?;
    let weights: Array1<f64> = fit
        .weights
        .iter()
        .zip(&scaler.scale)
        .map(|(w, s)| w / s)
        .collect();
    let intercept = fit.intercept - weights.dot(&Array1::from(scaler.mean.clone()));
    Ok(NnlsModel {
        weights,
        intercept,
        ..fit
    })
}

fn cv_mse(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    folds: &[usize],
    k: usize,
    alpha: f64,
) -> Result<f64> {
    let mut sse = 0.0;
    for fold in 0..k {
        let (train, test) = split_indices(folds, fold);
        let model = fit_standardized(
            x.select(Axis(0), &train).view(),
            y.select(Axis(0), &train).view(),
            alpha,
        )?;
        let pred = model.predict(x.select(Axis(0), &test).view());
        let r = &y.select(Axis(0), &test) - &pred;
        sse += r.dot(&r);
    }
    Ok(sse / y.len() as f64)
}

/// Penalty with the lowest CV error on `(x, y)`, ties toward larger.
fn select_alpha(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    plan: &CrossValidationPlan,
    seed: u64,
) -> Result<f64> {
    let k = plan.inner_folds.min(y.len());
    let folds = fold_assignment(y.len(), k, seed)?;
    let mut best = (f64::INFINITY, plan.regularization_grid[0]);
    for &alpha in &plan.regularization_grid {
        let mse = cv_mse(x, y, &folds, k, alpha)?;
        if mse < best.0 || (mse == best.0 && alpha > best.1) {
            best = (mse, alpha);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionExplanation {
    pub dimension: usize,
    /// Pearson correlation between the dimension and its out-of-fold prediction.
    pub cv_correlation: Option<f64>,
    /// Penalty chosen for the full-data fit.
    pub alpha: f64,
    /// Non-zero weights of the full-data fit, largest first.
    pub weights: Vec<(String, f64)>,
    pub converged: bool,
}

/// Regresses each embedding dimension on the predictor features with nested CV.
pub fn nnls_explain(
    emb: &Embedding,
    predictors: &FeatureTable,
    plan: &CrossValidationPlan,
) -> Result<Vec<DimensionExplanation>> {
    plan.validate()?;
    let (_, targets, x) = align(emb, predictors)?;
    let n = targets.nrows();
    if n < plan.outer_folds {
        return Err(SposeError::invalid(format!(
            "{n} shared concepts is fewer than {} outer folds",
            plan.outer_folds
        )));
    }
    for (d, col) in targets.columns().into_iter().enumerate() {
        if col.iter().all(|v| *v == col[0]) {
            return Err(SposeError::invalid(format!(
                "embedding dimension {d} has zero variance"
            )));
        }
    }
    (0..targets.ncols())
        .into_par_iter()
        .map(|d| {
            let y = targets.column(d);
            let seed = rng::derive_seed(plan.seed, d as u64);
            let folds = fold_assignment(n, plan.outer_folds, seed)?;
            let mut oof = Array1::<f64>::zeros(n);
            for fold in 0..plan.outer_folds {
                let (train, test) = split_indices(&folds, fold);
                let x_train = x.select(Axis(0), &train);
                let y_train = y.select(Axis(0), &train);
                let alpha = select_alpha(
                    x_train.view(),
                    y_train.view(),
                    plan,
                    rng::derive_seed(seed, fold as u64 + 1),
                )?;
                let model = fit_standardized(x_train.view(), y_train.view(), alpha)?;
                let pred = model.predict(x.select(Axis(0), &test).view());
                for (&i, v) in test.iter().zip(pred.iter()) {
                    oof[i] = *v;
                }
            }
            let alpha = select_alpha(x.view(), y, plan, seed)?;
            let full = fit_standardized(x.view(), y, alpha)?;
            let mut weights: Vec<(String, f64)> = full
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(f, w)| (predictors.feature_names()[f].clone(), *w))
                .collect();
            weights.sort_by(|a, b| b.1.total_cmp(&a.1));
            Ok(DimensionExplanation {
                dimension: d,
                cv_correlation: stats::pearson(&y.to_vec(), &oof.to_vec()),
                alpha,
                weights,
                converged: full.converged,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn recovers_exact_non_negative_fit() {
        let x = array![[1.0, 0.0], [2.0, 1.0], [3.0, 0.5], [4.0, 2.0], [0.5, 1.0]];
        let y = x.column(0).to_owned() * 2.0 + 1.0;
        let m = fit_nnls(x.view(), y.view(), 0.0).unwrap();
        assert!(m.converged);
        assert!((m.weights[0] - 2.0).abs() < 1e-6, "{:?}", m.weights);
        assert!(m.weights[1].abs() < 1e-6);
        assert!((m.intercept - 1.0).abs() < 1e-6);
    }

    #[test]
    fn negative_relationships_are_clamped() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![4.0, 3.0, 2.0, 1.0];
        let m = fit_nnls(x.view(), y.view(), 0.0).unwrap();
        assert_eq!(m.weights[0], 0.0);
        assert!((m.intercept - 2.5).abs() < 1e-12);
    }

    #[test]
    fn huge_penalty_zeroes_weights() {
        let x = array![[1.0, 3.0], [2.0, 1.0], [3.0, 0.5], [4.0, 2.0]];
        let y = array![1.0, 2.0, 3.0, 5.0];
        let m = fit_nnls(x.view(), y.view(), 1e6).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
    }
}
