use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spose::downstream::{
    fit_logistic, fit_nnls, logistic_feature_auc, logistic_objective, nn_category_accuracy,
    nnls_explain, nnls_objective, typicality_correlations, typicality_scores, CategoryLabeling,
    CrossValidationPlan,
};
use spose::{ConceptVocabulary, Embedding, FeatureTable};

fn small_plan(seed: u64) -> CrossValidationPlan {
    CrossValidationPlan {
        outer_folds: 5,
        inner_folds: 4,
        seed,
        ..CrossValidationPlan::default()
    }
}

/// Newton's method on the logistic objective with the intercept unpenalized.
fn newton_logistic(x: &Array2<f64>, y: &[bool], alpha: f64) -> (Array1<f64>, f64) {
    let (n, p) = x.dim();
    let mut xa = Array2::ones((n, p + 1));
    xa.slice_mut(ndarray::s![.., ..p]).assign(x);
    let mut beta = Array1::<f64>::zeros(p + 1);
    for _ in 0..100 {
        let z = xa.dot(&beta);
        let mu: Array1<f64> = z.mapv(|v| 1.0 / (1.0 + (-v).exp()));
        let t: Array1<f64> = y.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        let mut grad = xa.t().dot(&(&mu - &t)) / n as f64;
        let mut hess = Array2::<f64>::zeros((p + 1, p + 1));
        for i in 0..n {
            let wi = mu[i] * (1.0 - mu[i]) / n as f64;
            for a in 0..=p {
                for b in 0..=p {
                    hess[[a, b]] += wi * xa[[i, a]] * xa[[i, b]];
                }
            }
        }
        for a in 0..p {
            grad[a] += alpha * beta[a];
            hess[[a, a]] += alpha;
        }
        let step = solve(hess, grad);
        beta = &beta - &step;
        if step.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-14 {
            break;
        }
    }
    (beta.slice(ndarray::s![..p]).to_owned(), beta[p])
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))
            .unwrap();
        for k in 0..n {
            a.swap([col, k], [piv, k]);
        }
        b.swap(col, piv);
        for row in (col + 1)..n {
            let f = a[[row, col]] / a[[col, col]];
            for k in col..n {
                a[[row, k]] -= f * a[[col, k]];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| a[[row, k]] * x[k]).sum();
        x[row] = (b[row] - s) / a[[row, row]];
    }
    x
}

/// Projected gradient descent on the NNLS objective, many iterations.
fn reference_nnls(x: &Array2<f64>, y: &Array1<f64>, alpha: f64) -> (Array1<f64>, f64) {
    let (n, p) = x.dim();
    let nf = n as f64;
    // step 1/L with L bounded by the squared Frobenius norm of [X 1] over n
    let lipschitz = (x.iter().map(|v| v * v).sum::<f64>() + nf) / nf;
    let step = 1.0 / lipschitz;
    let mut w = Array1::<f64>::zeros(p);
    let mut b = 0.0;
    for _ in 0..400_000 {
        let r = x.dot(&w) + b - y;
        let gw = x.t().dot(&r) / nf + alpha;
        let gb = r.sum() / nf;
        w = (&w - &(gw * step)).mapv(|v| v.max(0.0));
        b -= step * gb;
    }
    (w, b)
}

#[test]
fn logistic_matches_newton_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Array2::from_shape_simple_fn((60, 3), || rng.gen_range(-1.0..1.0));
    let y: Vec<bool> = x
        .rows()
        .into_iter()
        .map(|r| r[0] - 0.5 * r[1] + rng.gen_range(-0.8..0.8) > 0.0)
        .collect();
    for alpha in [0.01, 0.3] {
        let fit = fit_logistic(x.view(), &y, alpha).unwrap();
        assert!(fit.converged);
        let (w, b) = newton_logistic(&x, &y, alpha);
        let f_fit = logistic_objective(x.view(), &y, alpha, fit.weights.view(), fit.intercept);
        let f_ref = logistic_objective(x.view(), &y, alpha, w.view(), b);
        assert!((f_fit - f_ref).abs() < 1e-6, "{f_fit} vs {f_ref}");
        assert!(f_fit >= f_ref - 1e-12);
    }
}

#[test]
fn nnls_matches_projected_gradient_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Array2::from_shape_simple_fn((30, 4), || rng.gen_range(0.0..1.0));
    let y: Array1<f64> = x
        .rows()
        .into_iter()
        .map(|r| 1.5 * r[0] - 1.0 * r[2] + 0.3 + rng.gen_range(-0.1..0.1))
        .collect();
    for alpha in [0.0, 0.01] {
        let fit = fit_nnls(x.view(), y.view(), alpha).unwrap();
        assert!(fit.converged);
        assert!(fit.weights.iter().all(|w| *w >= 0.0));
        let (w, b) = reference_nnls(&x, &y, alpha);
        let f_fit = nnls_objective(x.view(), y.view(), alpha, fit.weights.view(), fit.intercept);
        let f_ref = nnls_objective(x.view(), y.view(), alpha, w.view(), b);
        assert!((f_fit - f_ref).abs() < 1e-6, "{f_fit} vs {f_ref}");
    }
}

#[test]
fn random_labels_give_chance_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = 400;
    let emb = Embedding::new(
        ConceptVocabulary::numbered(m),
        Array2::from_shape_simple_fn((m, 4), || rng.gen_range(0.0..1.0)),
    )
    .unwrap();
    let labels = Array2::from_shape_simple_fn((m, 1), || if rng.gen_bool(0.3) { 1.0 } else { 0.0 });
    let n1 = labels.sum();
    let n0 = m as f64 - n1;
    let table =
        FeatureTable::new(ConceptVocabulary::numbered(m), vec!["noise".into()], labels).unwrap();
    let r = &logistic_feature_auc(&emb, &table, &small_plan(4)).unwrap()[0];
    let sigma = ((n0 + n1 + 1.0) / (12.0 * n0 * n1)).sqrt();
    assert!(
        (r.auc - 0.5).abs() < 3.0 * sigma,
        "AUC {} with null sd {sigma}",
        r.auc
    );
    assert_eq!(r.selected_alphas.len(), 5);
}

#[test]
fn feature_prediction_validates_targets() {
    let emb = Embedding::new(ConceptVocabulary::numbered(20), Array2::ones((20, 2))).unwrap();
    let frac = FeatureTable::new(
        ConceptVocabulary::numbered(20),
        vec!["f".into()],
        Array2::from_elem((20, 1), 0.5),
    )
    .unwrap();
    assert!(logistic_feature_auc(&emb, &frac, &small_plan(1)).is_err());
    let mut one = Array2::zeros((20, 1));
    one[[0, 0]] = 1.0;
    let rare = FeatureTable::new(ConceptVocabulary::numbered(20), vec!["f".into()], one).unwrap();
    assert!(logistic_feature_auc(&emb, &rare, &small_plan(1)).is_err());
}

#[test]
fn nnls_recovers_a_scaled_predictor() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 80;
    let pred = Array2::from_shape_simple_fn((n, 2), || rng.gen_range(0.0..1.0));
    let dim = pred.column(0).mapv(|v| 2.0 * v).insert_axis(Axis(1));
    let emb = Embedding::new(ConceptVocabulary::numbered(n), dim).unwrap();
    let table = FeatureTable::new(
        ConceptVocabulary::numbered(n),
        vec!["x".into(), "z".into()],
        pred,
    )
    .unwrap();
    let r = &nnls_explain(&emb, &table, &small_plan(6)).unwrap()[0];
    assert_eq!(r.weights[0].0, "x");
    assert!((r.weights[0].1 - 2.0).abs() < 0.05);
    assert!(r.cv_correlation.unwrap() > 0.999);
}

#[test]
fn typicality_scores_and_correlations() {
    let values = ndarray::array![[1.0, 0.0], [0.8, 0.2], [0.2, 0.8], [0.0, 1.0], [0.5, 0.5]];
    let emb = Embedding::new(ConceptVocabulary::numbered(5), values.clone()).unwrap();
    let members = [0, 1, 2];
    let scores = typicality_scores(&emb, &members).unwrap();
    let centroid = values.select(Axis(0), &members).mean_axis(Axis(0)).unwrap();
    for (i, s) in members.iter().zip(&scores) {
        assert!((values.row(*i).dot(&centroid) - s).abs() < 1e-15);
    }

    let labels = CategoryLabeling::new(
        [(0, "a"), (1, "a"), (2, "a"), (3, "b"), (4, "b")].map(|(i, c)| (i, c.to_string())),
    )
    .unwrap();
    let norms: BTreeMap<usize, f64> = members
        .iter()
        .zip(&scores)
        .map(|(i, s)| (*i, 3.0 * s + 1.0))
        .collect();
    let (per, median) = typicality_correlations(&emb, &labels, &norms).unwrap();
    assert_eq!(per.len(), 2);
    assert!((per[0].correlation.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(per[1].n, 0);
    assert!(per[1].correlation.is_none());
    assert!((median.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn nearest_neighbor_excludes_zero_vectors() {
    let values = ndarray::array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9], [0.0, 0.0]];
    let emb = Embedding::new(ConceptVocabulary::numbered(5), values).unwrap();
    let labels = CategoryLabeling::new(
        [(0, "a"), (1, "a"), (2, "b"), (3, "b"), (4, "b")].map(|(i, c)| (i, c.to_string())),
    )
    .unwrap();
    let r = nn_category_accuracy(&emb, &labels).unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.n_evaluated, 4);
    assert_eq!(r.excluded_zero_norm, vec![4]);
}
