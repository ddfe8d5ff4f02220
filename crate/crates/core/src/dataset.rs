//! Supervised sets pairing a country's export basket in year `y` with the
//! presence of a target product in year `y + delta`, plus the
//! country-partition folds used for cross-validated training.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::seed;
use crate::trade::{binarize, compute_rca, ExportPanel, PresenceMatrix, RcaMatrix};
use rand::seq::SliceRandom;

/// Which years feed the feature stack.
///
/// `LeakFree` stops the features at `y_last - 2*delta` so no label ever
/// comes from the test horizon. `FullHistory` stacks features through
/// `y_last - delta` with labels through `y_last`; it exists for
/// comparison runs and leaks the test year into training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainSpan {
    LeakFree,
    FullHistory,
}

/// Year window and binarization settings for dataset construction.
#[derive(Debug, Clone, Copy)]
pub struct StackSpec {
    pub y0: i32,
    pub y_last: i32,
    pub delta: i32,
    pub rca_threshold: f64,
    pub span: TrainSpan,
}

impl StackSpec {
    pub fn new(y0: i32, y_last: i32, delta: i32) -> Self {
        StackSpec {
            y0,
            y_last,
            delta,
            rca_threshold: 1.0,
            span: TrainSpan::LeakFree,
        }
    }

    /// Inclusive range of feature years, after validation.
    fn feature_years(&self) -> Result<(i32, i32)> {
        if self.delta < 1 {
            return Err(Error::validation(format!(
                "forecast offset must be at least 1 year, got {}",
                self.delta
            )));
        }
        let last_feature_year = match self.span {
            TrainSpan::LeakFree => self.y_last - 2 * self.delta,
            TrainSpan::FullHistory => self.y_last - self.delta,
        };
        if last_feature_year < self.y0 {
            let need = match self.span {
                TrainSpan::LeakFree => self.y0 + 2 * self.delta,
                TrainSpan::FullHistory => self.y0 + self.delta,
            };
            return Err(Error::validation(format!(
                "window [{}, {}] too short for delta {}: needs last year >= {}",
                self.y0, self.y_last, self.delta, need
            )));
        }
        Ok((self.y0, last_feature_year))
    }
}

/// Identifies one stacked row: the basket of `country` observed in `year`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowId {
    pub country: String,
    pub year: i32,
}

/// Feature matrix and per-product label columns for one training window.
///
/// Features are the vertically stacked RCA matrices of the feature years;
/// the label grid column for product `p` holds the presence of `p` shifted
/// `delta` years forward. Rows are year-major, country-minor.
#[derive(Debug, Clone)]
pub struct TrainingStack {
    rows: Vec<RowId>,
    features: Arc<Grid<f64>>,
    labels: Grid<u8>,
    products: Arc<Vec<String>>,
    delta: i32,
}

/// Stacked features plus the binary label vector of a single target
/// product.
#[derive(Debug, Clone)]
pub struct SupervisedSet {
    rows: Vec<RowId>,
    features: Arc<Grid<f64>>,
    labels: Vec<u8>,
    target_product: String,
    label_offset: i32,
    products: Arc<Vec<String>>,
}

impl TrainingStack {
    pub fn build(panel: &ExportPanel, spec: &StackSpec) -> Result<Self> {
        let (first, last) = spec.feature_years()?;
        panel.year_index(first)?;
        panel.year_index(last + spec.delta)?;
        let n_c = panel.countries().len();
        let n_p = panel.products().len();
        let n_years = (last - first + 1) as usize;
        let mut rows = Vec::with_capacity(n_years * n_c);
        let mut features = Vec::with_capacity(n_years * n_c * n_p);
        let mut labels = Grid::filled(n_years * n_c, n_p, 0u8);
        for (yi, year) in (first..=last).enumerate() {
            let rca = compute_rca(panel, year)?;
            let shifted = binarize(&compute_rca(panel, year + spec.delta)?, spec.rca_threshold)?;
            for (c, country) in panel.countries().iter().enumerate() {
                rows.push(RowId {
                    country: country.clone(),
                    year,
                });
                features.extend_from_slice(rca.values.row(c));
                let row = yi * n_c + c;
                for p in 0..n_p {
                    labels.set(row, p, shifted.values.at(c, p));
                }
            }
        }
        Ok(TrainingStack {
            features: Arc::new(Grid::from_vec(rows.len(), n_p, features)),
            rows,
            labels,
            products: Arc::new(panel.products().to_vec()),
            delta: spec.delta,
        })
    }

    pub fn rows(&self) -> &[RowId] {
        &self.rows
    }

    pub fn features(&self) -> &Grid<f64> {
        &self.features
    }

    pub fn n_products(&self) -> usize {
        self.products.len()
    }

    pub fn products(&self) -> &[String] {
        &self.products
    }

    /// Extracts the supervised set of one target product; the feature
    /// matrix is shared, not copied.
    pub fn set_for(&self, target_product: &str) -> Result<SupervisedSet> {
        let p = self
            .products
            .iter()
            .position(|code| code == target_product)
            .ok_or_else(|| Error::lookup(format!("unknown product {target_product}")))?;
        Ok(SupervisedSet {
            rows: self.rows.clone(),
            features: Arc::clone(&self.features),
            labels: (0..self.rows.len()).map(|r| self.labels.at(r, p)).collect(),
            target_product: target_product.to_string(),
            label_offset: self.delta,
            products: Arc::clone(&self.products),
        })
    }

    /// Keeps only the rows whose country satisfies `keep`; used to carve
    /// fold-specific stacks without rebuilding RCA matrices.
    pub fn filter_countries(&self, keep: impl Fn(&str) -> bool) -> Result<TrainingStack> {
        let idx: Vec<usize> = self
            .rows
            .iter()
            .enumerate()
            .filter(|(_, row)| keep(&row.country))
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(Error::validation("country filter left no rows"));
        }
        let n_p = self.products.len();
        let mut features = Vec::with_capacity(idx.len() * n_p);
        let mut labels = Grid::filled(idx.len(), n_p, 0u8);
        for (new_r, &r) in idx.iter().enumerate() {
            features.extend_from_slice(self.features.row(r));
            for p in 0..n_p {
                labels.set(new_r, p, self.labels.at(r, p));
            }
        }
        Ok(TrainingStack {
            rows: idx.iter().map(|&r| self.rows[r].clone()).collect(),
            features: Arc::new(Grid::from_vec(idx.len(), n_p, features)),
            labels,
            products: Arc::clone(&self.products),
            delta: self.delta,
        })
    }
}

impl SupervisedSet {
    /// Assembles a set from explicit parts, enforcing the row/label
    /// alignment invariant.
    pub fn from_parts(
        rows: Vec<RowId>,
        features: Grid<f64>,
        labels: Vec<u8>,
        target_product: String,
        label_offset: i32,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if rows.len() != features.rows() || rows.len() != labels.len() {
            return Err(Error::validation(format!(
                "rows/features/labels disagree: {} vs {} vs {}",
                rows.len(),
                features.rows(),
                labels.len()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::validation(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::validation("labels must be 0 or 1"));
        }
        Ok(SupervisedSet {
            rows,
            features: Arc::new(features),
            labels,
            target_product,
            label_offset,
            products: Arc::new(feature_names),
        })
    }

    pub fn rows(&self) -> &[RowId] {
        &self.rows
    }

    pub fn features(&self) -> &Grid<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn target_product(&self) -> &str {
        &self.target_product
    }

    pub fn label_offset(&self) -> i32 {
        self.label_offset
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.products
    }

    /// Debug export: `country,year,<product columns...>,label`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("country,year");
        for p in self.products.iter() {
            out.push(',');
            out.push_str(p);
        }
        out.push_str(",label\n");
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&row.country);
            out.push(',');
            out.push_str(&row.year.to_string());
            for v in self.features.row(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push(',');
            out.push_str(&self.labels[i].to_string());
            out.push('\n');
        }
        out
    }
}

/// Builds the supervised set of one target product directly from a panel.
pub fn build_training(
    panel: &ExportPanel,
    target_product: &str,
    spec: &StackSpec,
) -> Result<SupervisedSet> {
    TrainingStack::build(panel, spec)?.set_for(target_product)
}

/// Test-time pair: the RCA matrix observed `delta` years before `y_last`
/// and the presence matrix it is asked to predict.
pub fn build_test(
    panel: &ExportPanel,
    y_last: i32,
    delta: i32,
    rca_threshold: f64,
) -> Result<(RcaMatrix, PresenceMatrix)> {
    if delta < 1 {
        return Err(Error::validation(format!(
            "forecast offset must be at least 1 year, got {delta}"
        )));
    }
    let x_test = compute_rca(panel, y_last - delta)?;
    let y_test = binarize(&compute_rca(panel, y_last)?, rca_threshold)?;
    Ok((x_test, y_test))
}

/// Assignment of every country to exactly one of `k` folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, country: &str) -> Option<usize> {
        self.assignments.get(country).copied()
    }

    pub fn countries_in(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(c, _)| c.as_str())
            .collect()
    }

    pub fn assignments(&self) -> &BTreeMap<String, usize> {
        &self.assignments
    }
}

/// Randomly partitions countries into `k` folds whose sizes differ by at
/// most one. The same seed always produces the same plan.
pub fn make_folds(countries: &[String], k: usize, seed_value: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::validation(format!("need at least 2 folds, got {k}")));
    }
    if k > countries.len() {
        return Err(Error::validation(format!(
            "cannot split {} countries into {k} folds",
            countries.len()
        )));
    }
    let mut order: Vec<usize> = (0..countries.len()).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed_value, &[0x0f01d])));
    let n = countries.len();
    let base = n / k;
    let extra = n % k;
    let mut assignments = BTreeMap::new();
    let mut cursor = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &i in &order[cursor..cursor + size] {
            assignments.insert(countries[i].clone(), fold);
        }
        cursor += size;
    }
    Ok(FoldPlan { k, assignments })
}

/// Train/test restriction of a supervised set under a fold plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldRole {
    Train,
    Test,
}

/// Keeps the rows allowed by `role`: training rows exclude the fold's
/// countries, test rows keep only them. Feature columns are untouched.
pub fn cv_filter(
    set: &SupervisedSet,
    plan: &FoldPlan,
    fold: usize,
    role: FoldRole,
) -> Result<SupervisedSet> {
    if fold >= plan.k() {
        return Err(Error::validation(format!(
            "fold {fold} out of range for k={}",
            plan.k()
        )));
    }
    let keep = |country: &str| -> bool {
        let in_fold = plan.fold_of(country) == Some(fold);
        match role {
            FoldRole::Train => !in_fold,
            FoldRole::Test => in_fold,
        }
    };
    let idx: Vec<usize> = set
        .rows
        .iter()
        .enumerate()
        .filter(|(_, row)| keep(&row.country))
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(Error::validation(format!(
            "fold {fold} {role:?} selection is empty"
        )));
    }
    let n_p = set.n_features();
    let mut features = Vec::with_capacity(idx.len() * n_p);
    for &r in &idx {
        features.extend_from_slice(set.features.row(r));
    }
    Ok(SupervisedSet {
        rows: idx.iter().map(|&r| set.rows[r].clone()).collect(),
        features: Arc::new(Grid::from_vec(idx.len(), n_p, features)),
        labels: idx.iter().map(|&r| set.labels[r]).collect(),
        target_product: set.target_product.clone(),
        label_offset: set.label_offset,
        products: Arc::clone(&set.products),
    })
}
