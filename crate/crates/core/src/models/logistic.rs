use serde::{Deserialize, Serialize};

use crate::dataset::SupervisedSet;
use crate::error::{Error, Result};
use crate::models::boosted::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// L2 penalty on the weights; the intercept is not penalized.
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence: stop when the loss improves by less than this.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            l2: 1e-4,
            max_iter: 1000,
            tol: 1e-10,
        }
    }
}

/// L2-regularized logistic regression fitted by gradient descent with a
/// Lipschitz step size, so every iteration decreases the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// False when `max_iter` ran out before the improvement fell under
    /// `tol`; the model is still usable.
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticModel {
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let z: f64 = self
            .weights
            .iter()
            .zip(row)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.intercept;
        sigmoid(z)
    }
}

/// Mean logistic loss plus `l2/2 * ||w||^2`.
pub(crate) fn regularized_loss(
    features: &crate::grid::Grid<f64>,
    labels: &[u8],
    weights: &[f64],
    intercept: f64,
    l2: f64,
) -> f64 {
    let n = labels.len() as f64;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let z: f64 = weights
            .iter()
            .zip(features.row(i))
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + intercept;
        let softplus = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        loss += softplus - f64::from(y) * z;
    }
    loss / n + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

pub fn fit_logistic(set: &SupervisedSet, params: &LogisticParams) -> Result<LogisticModel> {
    if set.is_empty() {
        return Err(Error::validation("cannot fit logistic model on an empty set"));
    }
    let n = set.len();
    let p = set.n_features();
    let features = set.features();
    let labels = set.labels();
    // Gradient Lipschitz bound: tr(X'X)/(4n) for the data term (the
    // intercept column contributes n) plus the l2 term.
    let trace: f64 = features.values().iter().map(|x| x * x).sum::<f64>() + n as f64;
    let lipschitz = trace / (4.0 * n as f64) + params.l2;
    let step = 1.0 / lipschitz;

    let mut weights = vec![0.0; p];
    let mut intercept = 0.0;
    let mut loss = regularized_loss(features, labels, &weights, intercept, params.l2);
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_w = vec![0.0; p];
    for iter in 0..params.max_iter {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = features.row(i);
            let z: f64 = weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + intercept;
            let residual = sigmoid(z) - f64::from(y);
            for (g, x) in grad_w.iter_mut().zip(row) {
                *g += residual * x;
            }
            grad_b += residual;
        }
        let n_f = n as f64;
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= step * (g / n_f + params.l2 * *w);
        }
        intercept -= step * grad_b / n_f;
        let new_loss = regularized_loss(features, labels, &weights, intercept, params.l2);
        iterations = iter + 1;
        if (loss - new_loss).abs() < params.tol {
            converged = true;
            break;
        }
        loss = new_loss;
    }
    Ok(LogisticModel {
        weights,
        intercept,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tests::set_from_matrix;

    #[test]
    fn zero_iterations_scores_half() {
        let set = set_from_matrix(&[&[1.0], &[2.0]], &[0, 1]);
        let params = LogisticParams {
            max_iter: 0,
            ..LogisticParams::default()
        };
        let model = fit_logistic(&set, &params).unwrap();
        assert!(!model.converged);
        assert_eq!(model.score_row(&[5.0]), 0.5);
    }

    #[test]
    fn separable_data_gets_positive_weight() {
        let set = set_from_matrix(
            &[&[-2.0], &[-1.0], &[-0.5], &[0.5], &[1.0], &[2.0]],
            &[0, 0, 0, 1, 1, 1],
        );
        let model = fit_logistic(&set, &LogisticParams::default()).unwrap();
        assert!(model.weights[0] > 0.0);
        assert!(model.score_row(&[2.0]) > 0.5);
        assert!(model.score_row(&[-2.0]) < 0.5);
    }

    #[test]
    fn matches_grid_search_on_tiny_problem() {
        let set = set_from_matrix(&[&[0.0], &[1.0], &[2.0]], &[0, 0, 1]);
        let l2 = 0.1;
        let params = LogisticParams {
            l2,
            max_iter: 20000,
            tol: 1e-14,
        };
        let model = fit_logistic(&set, &params).unwrap();
        let fitted = regularized_loss(set.features(), set.labels(), &model.weights, model.intercept, l2);
        // Brute-force grid over (w, b).
        let mut best = f64::MAX;
        let mut w = -5.0;
        while w <= 5.0 {
            let mut b = -5.0;
            while b <= 5.0 {
                let loss = regularized_loss(set.features(), set.labels(), &[w], b, l2);
                if loss < best {
                    best = loss;
                }
                b += 0.01;
            }
            w += 0.01;
        }
        assert!(
            fitted <= best + 1e-4,
            "fitted loss {fitted} vs grid optimum {best}"
        );
    }

    #[test]
    fn loss_decreases_monotonically() {
        let set = set_from_matrix(
            &[&[0.1, 1.0], &[0.4, 0.2], &[0.9, 0.6], &[1.4, 0.1]],
            &[0, 1, 0, 1],
        );
        let mut prev = f64::MAX;
        for iters in [1usize, 5, 25, 125] {
            let params = LogisticParams {
                max_iter: iters,
                tol: 0.0,
                ..LogisticParams::default()
            };
            let model = fit_logistic(&set, &params).unwrap();
            let loss = regularized_loss(
                set.features(),
                set.labels(),
                &model.weights,
                model.intercept,
                params.l2,
            );
            assert!(loss <= prev + 1e-12);
            prev = loss;
        }
    }
}
