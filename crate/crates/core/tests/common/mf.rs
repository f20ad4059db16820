//! Independent oracles for the factor model: least squares via SVD for the
//! biases-only model, and central finite differences for the gradient.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ripple_core::knowledge::{FactorModel, Hyperparameters, Observations};

/// Minimum-norm least-squares fit of `a - mu = b_n + c_m`, returned as predictions.
pub fn normal_equations_predictions(targets: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = targets.shape();
    let mu = targets.mean();
    let mut design = DMatrix::zeros(n * m, n + m);
    let mut rhs = DVector::zeros(n * m);
    for i in 0..n {
        for j in 0..m {
            let r = i * m + j;
            design[(r, i)] = 1.0;
            design[(r, n + j)] = 1.0;
            rhs[r] = targets[(i, j)] - mu;
        }
    }
    // Normal equations are singular (one gauge freedom); solve them by SVD.
    let gram = design.transpose() * &design;
    let solution = gram.svd(true, true).solve(&(design.transpose() * rhs), 1e-10).unwrap();
    DMatrix::from_fn(n, m, |i, j| mu + solution[i] + solution[n + j])
}

/// Random fully observed matrix whose unclamped least-squares fit stays inside (0, 1).
pub fn interior_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    loop {
        let t = DMatrix::from_fn(n, m, |_, _| rng.random_range(0.2..0.8));
        let p = normal_equations_predictions(&t);
        if p.iter().all(|v| (0.02..0.98).contains(v)) {
            return (t, p);
        }
    }
}

pub fn observations(t: &DMatrix<f64>) -> Observations {
    let (n, m) = t.shape();
    Observations {
        n_users: n,
        n_questions: m,
        entries: (0..n).flat_map(|i| (0..m).map(move |j| (i, j, t[(i, j)]))).collect(),
    }
}

/// Random parameters whose raw scores stay well inside (0, 1), away from clamp kinks.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize, m: usize, k: usize, reg: f64) -> FactorModel {
    let h = Hyperparameters { k, reg, ..Default::default() };
    let mut model = FactorModel::zeros(n, m, rng.random_range(0.4..0.6), h);
    let mut fill = |v: &mut Vec<f64>, scale: f64| v.iter_mut().for_each(|x| *x = rng.random_range(-scale..scale));
    fill(&mut model.user_bias, 0.1);
    fill(&mut model.question_bias, 0.1);
    fill(&mut model.user_factors, 0.1);
    fill(&mut model.question_factors, 0.1);
    model
}

fn params_mut(model: &mut FactorModel, i: usize) -> &mut f64 {
    let (nu, nq, nuf) = (model.user_bias.len(), model.question_bias.len(), model.user_factors.len());
    if i < nu {
        &mut model.user_bias[i]
    } else if i < nu + nq {
        &mut model.question_bias[i - nu]
    } else if i < nu + nq + nuf {
        &mut model.user_factors[i - nu - nq]
    } else {
        &mut model.question_factors[i - nu - nq - nuf]
    }
}

pub fn finite_difference_gradient(model: &FactorModel, obs: &Observations, h: f64) -> Vec<f64> {
    let n = model.user_bias.len() + model.question_bias.len() + model.user_factors.len() + model.question_factors.len();
    (0..n)
        .map(|i| {
            let mut plus = model.clone();
            *params_mut(&mut plus, i) += h;
            let mut minus = model.clone();
            *params_mut(&mut minus, i) -= h;
            (plus.loss(obs).unwrap() - minus.loss(obs).unwrap()) / (2.0 * h)
        })
        .collect()
}

/// Relative L2 error of the analytic gradient against central differences
/// at a random point with sparse observations and one unobserved user.
pub fn gradient_check_error(rng: &mut ChaCha8Rng) -> f64 {
    let (n, m, k) = (rng.random_range(2..6), rng.random_range(2..6), rng.random_range(0..4));
    let model = random_model(rng, n, m, k, 0.05);
    let mut entries = Vec::new();
    for u in 0..n - 1 {
        for q in 0..m {
            if rng.random_bool(0.7) {
                entries.push((u, q, if rng.random_bool(0.5) { 1.0 } else { 0.0 }));
            }
        }
    }
    let obs = Observations { n_users: n, n_questions: m, entries };
    let analytic = model.gradient(&obs).unwrap().flatten();
    let numeric = finite_difference_gradient(&model, &obs, 1e-6);
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / norm
}
