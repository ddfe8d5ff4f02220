use serde::{Deserialize, Serialize};

use crate::dataset::SupervisedSet;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Regression tree node for boosting; leaf values are log-odds
/// increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Newton gain of the split, `1/2 [G_L^2/(H_L+l) + G_R^2/(H_R+l)
        /// - G^2/(H+l)]`; summed per feature this is the boosted
        /// importance.
        gain: f64,
        left: Box<RegNode>,
        right: Box<RegNode>,
    },
    Leaf {
        value: f64,
    },
}

impl RegNode {
    pub fn value_for(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                RegNode::Leaf { value } => return *value,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, RegNode::Leaf { .. })
    }

    pub(crate) fn accumulate_gain(&self, acc: &mut [f64]) {
        if let RegNode::Split {
            feature,
            gain,
            left,
            right,
            ..
        } = self
        {
            acc[*feature] += gain;
            left.accumulate_gain(acc);
            right.accumulate_gain(acc);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// L2 penalty on leaf values.
    pub l2: f64,
    /// Minimum hessian mass per child; keeps leaves away from empty or
    /// saturated partitions.
    pub min_child_weight: f64,
    /// Prior probability before any tree is applied.
    pub base_score: f64,
}

impl Default for BoostedParams {
    fn default() -> Self {
        BoostedParams {
            n_rounds: 100,
            learning_rate: 0.3,
            max_depth: 6,
            l2: 1.0,
            min_child_weight: 1.0,
            base_score: 0.5,
        }
    }
}

/// Newton-boosted ensemble on logistic loss.
///
/// The predicted score is
/// `sigmoid(logit(base_score) + learning_rate * sum of tree outputs)`,
/// always inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub trees: Vec<RegNode>,
    pub n_features: usize,
    pub params: BoostedParams,
    /// Per-round mean logistic loss on the training set, starting with
    /// the loss of the bare prior.
    pub train_loss: Vec<f64>,
}

impl BoostedModel {
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let margin: f64 = self.trees.iter().map(|t| t.value_for(row)).sum();
        sigmoid(logit(self.params.base_score) + self.params.learning_rate * margin)
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn mean_logistic_loss(margins: &[f64], labels: &[u8]) -> f64 {
    let n = labels.len() as f64;
    margins
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            // log(1 + e^z) - y z, computed stably.
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            softplus - f64::from(y) * z
        })
        .sum::<f64>()
        / n
}

/// Per-round Newton boosting: each tree is fitted to the gradients
/// `g_i = p_i - y_i` and hessians `h_i = p_i (1 - p_i)` of the logistic
/// loss, with leaf values `-G/(H + l2)`. Splits with non-positive gain
/// are not made; a round whose tree cannot split at all contributes
/// nothing, so a single-class set degenerates to the constant
/// `base_score`.
pub fn fit_boosted(set: &SupervisedSet, params: &BoostedParams) -> Result<BoostedModel> {
    if set.is_empty() {
        return Err(Error::validation("cannot boost on an empty set"));
    }
    if !(params.base_score > 0.0 && params.base_score < 1.0) {
        return Err(Error::validation(format!(
            "base_score must be inside (0, 1), got {}",
            params.base_score
        )));
    }
    if params.l2 < 0.0 || params.learning_rate <= 0.0 {
        return Err(Error::validation(
            "learning_rate must be positive and l2 non-negative".to_string(),
        ));
    }
    let n = set.len();
    let features = set.features();
    let labels = set.labels();
    let mut margins = vec![logit(params.base_score); n];
    let mut train_loss = vec![mean_logistic_loss(&margins, labels)];
    let mut trees = Vec::new();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..params.n_rounds {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - f64::from(labels[i]);
            hess[i] = p * (1.0 - p);
        }
        let rows: Vec<usize> = (0..n).collect();
        let tree = grow(features, &grad, &hess, rows, params, 0);
        if tree.is_leaf() {
            // No split had positive gain anywhere; adding a constant
            // would drift away from base_score on degenerate sets.
            train_loss.push(*train_loss.last().unwrap());
            continue;
        }
        for i in 0..n {
            margins[i] += params.learning_rate * tree.value_for(features.row(i));
        }
        train_loss.push(mean_logistic_loss(&margins, labels));
        trees.push(tree);
    }
    Ok(BoostedModel {
        trees,
        n_features: set.n_features(),
        params: params.clone(),
        train_loss,
    })
}

fn leaf_value(g: f64, h: f64, l2: f64) -> f64 {
    -g / (h + l2)
}

struct BestRegSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn grow(
    features: &Grid<f64>,
    grad: &[f64],
    hess: &[f64],
    rows: Vec<usize>,
    params: &BoostedParams,
    depth: usize,
) -> RegNode {
    let g: f64 = rows.iter().map(|&r| grad[r]).sum();
    let h: f64 = rows.iter().map(|&r| hess[r]).sum();
    let make_leaf = || RegNode::Leaf {
        value: leaf_value(g, h, params.l2),
    };
    if depth >= params.max_depth || rows.len() < 2 {
        return make_leaf();
    }
    let Some(best) = best_reg_split(features, grad, hess, &rows, params, g, h) else {
        return make_leaf();
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&r| features.at(r, best.feature) <= best.threshold);
    let left = grow(features, grad, hess, left_rows, params, depth + 1);
    let right = grow(features, grad, hess, right_rows, params, depth + 1);
    RegNode::Split {
        feature: best.feature,
        threshold: best.threshold,
        gain: best.gain,
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn best_reg_split(
    features: &Grid<f64>,
    grad: &[f64],
    hess: &[f64],
    rows: &[usize],
    params: &BoostedParams,
    g_total: f64,
    h_total: f64,
) -> Option<BestRegSplit> {
    let n = rows.len();
    let l2 = params.l2;
    let parent_term = g_total * g_total / (h_total + l2);
    let mut best: Option<BestRegSplit> = None;
    let mut column: Vec<(f64, f64, f64)> = Vec::with_capacity(n);
    for feature in 0..features.cols() {
        column.clear();
        column.extend(rows.iter().map(|&r| (features.at(r, feature), grad[r], hess[r])));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut g_left = 0.0;
        let mut h_left = 0.0;
        for i in 0..n - 1 {
            g_left += column[i].1;
            h_left += column[i].2;
            let value = column[i].0;
            let next = column[i + 1].0;
            if value == next {
                continue;
            }
            let threshold = (value + next) / 2.0;
            if threshold >= next {
                continue;
            }
            let g_right = g_total - g_left;
            let h_right = h_total - h_left;
            if h_left < params.min_child_weight || h_right < params.min_child_weight {
                continue;
            }
            let gain = 0.5
                * (g_left * g_left / (h_left + l2) + g_right * g_right / (h_right + l2)
                    - parent_term);
            if gain <= 0.0 {
                continue;
            }
            let improves = match &best {
                None => true,
                Some(b) => gain > b.gain,
            };
            if improves {
                best = Some(BestRegSplit {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}
