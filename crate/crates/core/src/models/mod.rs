//! Per-product classifiers and the machinery that turns their outputs
//! into a complete country x product score matrix.

mod boosted;
mod forest;
mod logistic;
mod tree;

pub use boosted::{fit_boosted, BoostedModel, BoostedParams, RegNode};
pub use forest::{fit_forest, ForestModel, ForestParams, MaxFeatures};
pub use logistic::{fit_logistic, LogisticModel, LogisticParams};
pub use tree::{export_tree_dot, fit_tree, CartParams, TreeModel, TreeNode};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::trade::{labeled_matrix_csv, Axes, RcaMatrix};

/// Any fitted classifier, scored through one interface. New algorithms
/// plug in as further variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
    Boosted(BoostedModel),
    Logistic(LogisticModel),
}

const MODEL_FORMAT: &str = "tradecast-model";
const MODEL_VERSION: u32 = 1;

/// Versioned envelope for model files.
#[derive(Debug, Serialize, Deserialize)]
struct SavedModel {
    format: String,
    version: u32,
    model: Model,
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Model::Tree(m) => m.n_features,
            Model::Forest(m) => m.n_features,
            Model::Boosted(m) => m.n_features,
            Model::Logistic(m) => m.weights.len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Tree(_) => "tree",
            Model::Forest(_) => "forest",
            Model::Boosted(_) => "boosted",
            Model::Logistic(_) => "logistic",
        }
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        match self {
            Model::Tree(m) => m.score_row(row),
            Model::Forest(m) => m.score_row(row),
            Model::Boosted(m) => m.score_row(row),
            Model::Logistic(m) => m.score_row(row),
        }
    }

    /// Scores every row of a feature matrix. The column count must match
    /// the training arity.
    pub fn predict(&self, features: &Grid<f64>) -> Result<Vec<f64>> {
        if features.cols() != self.n_features() {
            return Err(Error::validation(format!(
                "model expects {} features, input has {}",
                self.n_features(),
                features.cols()
            )));
        }
        Ok((0..features.rows())
            .map(|r| self.score_row(features.row(r)))
            .collect())
    }

    /// JSON text sufficient to reload and re-score bit-identically.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&SavedModel {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        })
        .expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let saved: SavedModel = serde_json::from_str(text)
            .map_err(|e| Error::validation(format!("malformed model file: {e}")))?;
        if saved.format != MODEL_FORMAT {
            return Err(Error::validation(format!(
                "not a model file (format {})",
                saved.format
            )));
        }
        if saved.version != MODEL_VERSION {
            return Err(Error::validation(format!(
                "unsupported model version {}",
                saved.version
            )));
        }
        Ok(saved.model)
    }
}

/// Per-(country, product) model scores in `[0, 1]` for one target year.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub year: i32,
    pub values: Grid<f64>,
    pub axes: Arc<Axes>,
}

impl ScoreMatrix {
    pub fn to_csv_string(&self) -> String {
        labeled_matrix_csv(&self.axes, &self.values)
    }
}

/// Collects per-product (and per-fold) score vectors into a complete
/// matrix, rejecting duplicate or missing coverage.
#[derive(Debug, Clone)]
pub struct ScoreMatrixBuilder {
    year: i32,
    axes: Arc<Axes>,
    values: Grid<f64>,
    /// Tag of the work unit that filled each cell, -1 while empty;
    /// the cross-validation audit reads this back.
    source: Grid<i64>,
}

impl ScoreMatrixBuilder {
    pub fn new(axes: Arc<Axes>, year: i32) -> Self {
        let (c, p) = (axes.n_countries(), axes.n_products());
        ScoreMatrixBuilder {
            year,
            axes,
            values: Grid::filled(c, p, 0.0),
            source: Grid::filled(c, p, -1),
        }
    }

    fn cell_name(&self, country: usize, product: usize) -> String {
        format!(
            "({}, {})",
            self.axes.countries[country], self.axes.products[product]
        )
    }

    pub fn set(&mut self, country: usize, product: usize, score: f64, source_tag: u32) -> Result<()> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::validation(format!(
                "score {score} outside [0, 1] for cell {}",
                self.cell_name(country, product)
            )));
        }
        if self.source.at(country, product) >= 0 {
            return Err(Error::Assembly(format!(
                "cell {} covered twice",
                self.cell_name(country, product)
            )));
        }
        self.values.set(country, product, score);
        self.source.set(country, product, i64::from(source_tag));
        Ok(())
    }

    /// Source tags so far; -1 marks an unfilled cell.
    pub fn sources(&self) -> &Grid<i64> {
        &self.source
    }

    pub fn axes(&self) -> &Arc<Axes> {
        &self.axes
    }

    pub fn finish(self) -> Result<ScoreMatrix> {
        for c in 0..self.source.rows() {
            for p in 0..self.source.cols() {
                if self.source.at(c, p) < 0 {
                    return Err(Error::Assembly(format!(
                        "cell {} never covered",
                        self.cell_name(c, p)
                    )));
                }
            }
        }
        Ok(ScoreMatrix {
            year: self.year,
            values: self.values,
            axes: self.axes,
        })
    }
}

/// Assembles a full score matrix from one score vector per product
/// (countries in axis order).
pub fn assemble_score_matrix(
    axes: &Arc<Axes>,
    year: i32,
    per_product: &BTreeMap<String, Vec<f64>>,
) -> Result<ScoreMatrix> {
    let mut builder = ScoreMatrixBuilder::new(Arc::clone(axes), year);
    for (code, scores) in per_product {
        let p = axes
            .product_index(code)
            .ok_or_else(|| Error::Assembly(format!("unknown product {code}")))?;
        if scores.len() != axes.n_countries() {
            return Err(Error::Assembly(format!(
                "product {code}: {} scores for {} countries",
                scores.len(),
                axes.n_countries()
            )));
        }
        for (c, &s) in scores.iter().enumerate() {
            builder.set(c, p, s, 0)?;
        }
    }
    builder.finish()
}

/// The persistence benchmark: the observed RCA values themselves as
/// ranking scores, squashed through `r / (1 + r)` to satisfy the `[0, 1]`
/// score contract. Rank metrics are unaffected by the monotone map.
pub fn rca_benchmark(x_test: &RcaMatrix) -> ScoreMatrix {
    let values = Grid::from_fn(x_test.values.rows(), x_test.values.cols(), |c, p| {
        let r = x_test.values.at(c, p);
        r / (1.0 + r)
    });
    ScoreMatrix {
        year: x_test.year,
        values,
        axes: Arc::clone(&x_test.axes),
    }
}

/// Normalized mean impurity (or gain) decrease per feature.
///
/// Forest and tree models sum each split's Gini decrease weighted by the
/// node's sample share; boosted models use the Newton gain. Sums are
/// averaged over trees and normalized to one. A model with no splits
/// yields the all-zero vector.
pub fn feature_importance(model: &Model) -> Result<Vec<f64>> {
    let n = model.n_features();
    let mut acc = vec![0.0; n];
    match model {
        Model::Tree(m) => m.root.accumulate_importance(&mut acc),
        Model::Forest(m) => {
            for t in &m.trees {
                t.accumulate_importance(&mut acc);
            }
            let k = m.trees.len() as f64;
            acc.iter_mut().for_each(|v| *v /= k);
        }
        Model::Boosted(m) => {
            for t in &m.trees {
                t.accumulate_gain(&mut acc);
            }
            if !m.trees.is_empty() {
                let k = m.trees.len() as f64;
                acc.iter_mut().for_each(|v| *v /= k);
            }
        }
        Model::Logistic(_) => {
            return Err(Error::validation(
                "impurity importance is only defined for tree-based models".to_string(),
            ))
        }
    }
    let total: f64 = acc.iter().sum();
    if total > 0.0 {
        acc.iter_mut().for_each(|v| *v /= total);
    }
    Ok(acc)
}
