use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SupervisedSet;
use crate::error::{Error, Result};
use crate::models::tree::{fit_tree_on, CartParams, TreeNode};
use crate::seed;

/// Features examined per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(P))`, the usual random-forest choice.
    Sqrt,
    /// Every feature; with bootstrap on this is plain bagging.
    All,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(&self, n_features: usize) -> Option<usize> {
        match self {
            MaxFeatures::Sqrt => Some((n_features as f64).sqrt().ceil() as usize),
            MaxFeatures::All => None,
            MaxFeatures::Count(m) => Some((*m).min(n_features)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            max_depth: None,
            min_samples_leaf: 1,
        }
    }
}

/// Ensemble of CART trees fitted on bootstrap resamples; the score of a
/// row is the mean of the leaf scores, so it always lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub n_features: usize,
    pub params: ForestParams,
    pub seed: u64,
}

impl ForestModel {
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.score_row(row)).sum();
        sum / self.trees.len() as f64
    }
}

/// Fits `n_trees` CART trees. Tree `t` draws its bootstrap sample and its
/// per-node feature subsets from a stream derived as `(seed, t)`, so the
/// model is identical however trees are scheduled.
pub fn fit_forest(set: &SupervisedSet, params: &ForestParams, seed_value: u64) -> Result<ForestModel> {
    if set.is_empty() {
        return Err(Error::validation("cannot fit a forest on an empty set"));
    }
    if params.n_trees == 0 {
        return Err(Error::validation("forest needs at least one tree"));
    }
    let cart = CartParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: params.max_features.resolve(set.n_features()),
    };
    let n = set.len();
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = seed::rng(seed::derive(seed_value, &[t as u64]));
        let rows: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        trees.push(fit_tree_on(set.features(), set.labels(), rows, &cart, &mut rng)?);
    }
    Ok(ForestModel {
        trees,
        n_features: set.n_features(),
        params: params.clone(),
        seed: seed_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tests::set_from_matrix;
    use crate::models::tree::{fit_tree, CartParams};
    use rand::Rng;

    fn random_set(seed_value: u64, n: usize, p: usize) -> SupervisedSet {
        let mut rng = crate::seed::rng(seed_value);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.gen_range(0.0..2.0)).collect())
            .collect();
        let ys: Vec<u8> = xs
            .iter()
            .map(|row| u8::from(row[0] + row[1 % p] > 2.0) ^ u8::from(rng.gen_bool(0.1)))
            .collect();
        let refs: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
        set_from_matrix(&refs, &ys)
    }

    #[test]
    fn degenerate_forest_equals_single_tree() {
        let set = random_set(1, 30, 3);
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
            ..ForestParams::default()
        };
        let forest = fit_forest(&set, &params, 42).unwrap();
        let tree = fit_tree(&set, &CartParams::default(), 42).unwrap();
        for i in 0..set.len() {
            let row = set.features().row(i);
            assert_eq!(forest.score_row(row), tree.score_row(row));
        }
    }

    #[test]
    fn same_seed_same_scores() {
        let set = random_set(2, 40, 4);
        let params = ForestParams {
            n_trees: 12,
            ..ForestParams::default()
        };
        let a = fit_forest(&set, &params, 7).unwrap();
        let b = fit_forest(&set, &params, 7).unwrap();
        assert_eq!(a, b);
        let c = fit_forest(&set, &params, 8).unwrap();
        let differs = (0..set.len())
            .any(|i| a.score_row(set.features().row(i)) != c.score_row(set.features().row(i)));
        assert!(differs, "different seeds should disagree somewhere");
    }

    #[test]
    fn forest_score_is_mean_of_tree_scores() {
        let set = random_set(3, 25, 3);
        let params = ForestParams {
            n_trees: 5,
            ..ForestParams::default()
        };
        let forest = fit_forest(&set, &params, 3).unwrap();
        for i in 0..set.len() {
            let row = set.features().row(i);
            let mean: f64 =
                forest.trees.iter().map(|t| t.score_row(row)).sum::<f64>() / 5.0;
            assert_eq!(forest.score_row(row), mean);
            assert!((0.0..=1.0).contains(&forest.score_row(row)));
        }
    }

    #[test]
    fn sqrt_features_resolves() {
        assert_eq!(MaxFeatures::Sqrt.resolve(9), Some(3));
        assert_eq!(MaxFeatures::Sqrt.resolve(10), Some(4));
        assert_eq!(MaxFeatures::All.resolve(10), None);
        assert_eq!(MaxFeatures::Count(99).resolve(10), Some(10));
    }
}
