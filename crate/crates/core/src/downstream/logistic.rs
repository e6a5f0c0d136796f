//! L2-regularized logistic regression fitted by gradient descent with
//! backtracking line search, and nested cross-validated feature prediction.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::{align, split_indices, stratified_fold_assignment, CrossValidationPlan, Standardizer};
use crate::data::{Embedding, FeatureTable};
use crate::error::{Result, SposeError};
use crate::rng;
use crate::stats;

const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Array1<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    /// Linear decision values `x w + b`.
    pub fn decision(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.dot(&self.weights) + self.intercept
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean log-loss plus `alpha / 2 * ||w||^2`; the intercept is unpenalized.
pub fn logistic_objective(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    alpha: f64,
    w: ArrayView1<'_, f64>,
    b: f64,
) -> f64 {
    let z = x.dot(&w) + b;
    let loss: f64 = z
        .iter()
        .zip(y)
        .map(|(&z, &t)| softplus(z) - if t { z } else { 0.0 })
        .sum::<f64>()
        / y.len() as f64;
    loss + 0.5 * alpha * w.dot(&w)
}

fn gradient(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    alpha: f64,
    w: &Array1<f64>,
    b: f64,
) -> (Array1<f64>, f64) {
    let n = y.len() as f64;
    let z = x.dot(w) + b;
    let resid: Array1<f64> = z
        .iter()
        .zip(y)
        .map(|(&z, &t)| sigmoid(z) - if t { 1.0 } else { 0.0 })
        .collect();
    let gw = x.t().dot(&resid) / n + alpha * w;
    (gw, resid.sum() / n)
}

pub fn fit_logistic(x: ArrayView2<'_, f64>, y: &[bool], alpha: f64) -> Result<LogisticModel> {
    if x.nrows() != y.len() || y.is_empty() {
        return Err(SposeError::Shape(format!(
            "{} rows, {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(SposeError::invalid(
            "logistic regularization must be positive",
        ));
    }
    let p = x.ncols();
    let n_pos = y.iter().filter(|t| **t).count();
    if n_pos == 0 || n_pos == y.len() {
        // one class: no finite optimum for the intercept; use a smoothed base rate
        let rate = (n_pos as f64 + 0.5) / (y.len() as f64 + 1.0);
        return Ok(LogisticModel {
            weights: Array1::zeros(p),
            intercept: (rate / (1.0 - rate)).ln(),
            iterations: 0,
            converged: true,
        });
    }
    let mut w = Array1::zeros(p);
    let mut b = 0.0;
    let mut step = 1.0;
    let mut f = logistic_objective(x, y, alpha, w.view(), b);
    for it in 0..MAX_ITER {
        let (gw, gb) = gradient(x, y, alpha, &w, b);
        let gnorm2 = gw.dot(&gw) + gb * gb;
        if gnorm2.sqrt() < GRAD_TOL {
            return Ok(LogisticModel {
                weights: w,
                intercept: b,
                iterations: it,
                converged: true,
            });
        }
        step *= 2.0;
        loop {
            let w_new = &w - &(&gw * step);
            let b_new = b - step * gb;
            let f_new = logistic_objective(x, y, alpha, w_new.view(), b_new);
            if f_new <= f - 1e-4 * step * gnorm2 {
                w = w_new;
                b = b_new;
                f = f_new;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                // no further decrease is representable
                return Ok(LogisticModel {
                    weights: w,
                    intercept: b,
                    iterations: it,
                    converged: gnorm2.sqrt() < 1e3 * GRAD_TOL,
                });
            }
        }
    }
    Ok(LogisticModel {
        weights: w,
        intercept: b,
        iterations: MAX_ITER,
        converged: false,
    })
}

/// Mean held-out log-loss of a model.
fn held_out_log_loss(model: &LogisticModel, x: ArrayView2<'_, f64>, y: &[bool]) -> f64 {
    let z = model.decision(x);
    z.iter()
        .zip(y)
        .map(|(&z, &t)| softplus(z) - if t { z } else { 0.0 })
        .sum::<f64>()
        / y.len() as f64
}

fn pick<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Standardizes on the training rows, fits, and returns decision values for the test rows.
fn fit_and_score(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    train: &[usize],
    test: &[usize],
    alpha: f64,
) -> Result<(Array1<f64>, bool)> {
    let x_train = x.select(Axis(0), train);
    let scaler = Standardizer::fit(x_train.view());
    let model = fit_logistic(scaler.apply(x_train.view()).view(), &pick(y, train), alpha)?;
    let x_test = scaler.apply(x.select(Axis(0), test).view());
    Ok((model.decision(x_test.view()), model.converged))
}

/// Regularization strength with the lowest inner-CV log-loss (ties toward larger).
fn select_alpha(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    plan: &CrossValidationPlan,
    seed: u64,
) -> Result<(f64, bool)> {
    let k = plan.inner_folds.min(y.len());
    let folds = stratified_fold_assignment(y, k, seed)?;
    let mut best = (f64::INFINITY, plan.regularization_grid[0]);
    let mut all_converged = true;
    for &alpha in &plan.regularization_grid {
        let mut loss = 0.0;
        for fold in 0..k {
            let (train, test) = split_indices(&folds, fold);
            let x_train = x.select(Axis(0), &train);
            let scaler = Standardizer::fit(x_train.view());
            let model = fit_logistic(scaler.apply(x_train.view()).view(), &pick(y, &train), alpha)?;
            all_converged &= model.converged;
            let x_test = scaler.apply(x.select(Axis(0), &test).view());
            loss += held_out_log_loss(&model, x_test.view(), &pick(y, &test)) * test.len() as f64;
        }
        if loss < best.0 || (loss == best.0 && alpha > best.1) {
            best = (loss, alpha);
        }
    }
    Ok((best.1, all_converged))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureAuc {
    pub feature: String,
    pub auc: f64,
    pub n_positive: usize,
    /// Regularization chosen by the inner loop of each outer fold.
    pub selected_alphas: Vec<f64>,
    /// False if any fit hit the iteration limit.
    pub converged: bool,
}

/// Nested cross-validation: the inner loop picks the regularization strength,
/// the outer loop produces out-of-fold decision values, and the pooled values
/// are scored by ROC AUC.
pub fn nested_cv_auc(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    plan: &CrossValidationPlan,
    seed: u64,
) -> Result<(f64, Vec<f64>, bool)> {
    plan.validate()?;
    let folds = stratified_fold_assignment(y, plan.outer_folds, seed)?;
    let mut scores = vec![0.0; y.len()];
    let mut alphas = Vec::with_capacity(plan.outer_folds);
    let mut converged = true;
    for fold in 0..plan.outer_folds {
        let (train, test) = split_indices(&folds, fold);
        if test.is_empty() {
            continue;
        }
        let x_train = x.select(Axis(0), &train);
        let y_train = pick(y, &train);
        let (alpha, inner_ok) = select_alpha(
            x_train.view(),
            &y_train,
            plan,
            rng::derive_seed(seed, fold as u64 + 1),
        )?;
        let (s, ok) = fit_and_score(x, y, &train, &test, alpha)?;
        for (&i, v) in test.iter().zip(s.iter()) {
            scores[i] = *v;
        }
        alphas.push(alpha);
        converged &= inner_ok && ok;
    }
    let auc =
        stats::roc_auc(&scores, y).ok_or_else(|| SposeError::invalid("AUC needs both classes"))?;
    Ok((auc, alphas, converged))
}

/// Predicts each binary feature of `targets` from the embedding.
pub fn logistic_feature_auc(
    emb: &Embedding,
    targets: &FeatureTable,
    plan: &CrossValidationPlan,
) -> Result<Vec<FeatureAuc>> {
    plan.validate()?;
    let (_, x, t) = align(emb, targets)?;
    if t.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(SposeError::invalid(
            "feature targets must be binary (0 or 1)",
        ));
    }
    let labels: Vec<Vec<bool>> = t
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|v| *v == 1.0).collect())
        .collect();
    for (f, y) in labels.iter().enumerate() {
        let n_pos = y.iter().filter(|v| **v).count();
        if n_pos < 2 || y.len() - n_pos < 2 {
            return Err(SposeError::invalid(format!(
                "feature {:?} needs at least 2 positives and 2 negatives (has {n_pos} of {})",
                targets.feature_names()[f],
                y.len()
            )));
        }
    }
    labels
        .par_iter()
        .enumerate()
        .map(|(f, y)| {
            let seed = rng::derive_seed(plan.seed, f as u64);
            let (auc, selected_alphas, converged) = nested_cv_auc(x.view(), y, plan, seed)?;
            Ok(FeatureAuc {
                feature: targets.feature_names()[f].clone(),
                auc,
                n_positive: y.iter().filter(|v| **v).count(),
                selected_alphas,
                converged,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_class_fit_is_constant() {
        let x = array![[1.0], [2.0], [3.0]];
        let m = fit_logistic(x.view(), &[true, true, true], 1.0).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
        assert!(m.intercept > 0.0);
    }

    #[test]
    fn gradient_vanishes_at_solution() {
        let x = array![
            [0.0, 1.0],
            [1.0, 0.5],
            [2.0, -1.0],
            [3.0, 0.0],
            [1.5, 1.5],
            [0.5, -0.5]
        ];
        let y = [false, false, true, true, true, false];
        let m = fit_logistic(x.view(), &y, 0.1).unwrap();
        assert!(m.converged);
        let (gw, gb) = gradient(x.view(), &y, 0.1, &m.weights, m.intercept);
        assert!((gw.dot(&gw) + gb * gb).sqrt() < 1e-6);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
