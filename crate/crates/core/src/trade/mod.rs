//! Export panels, comparative-advantage matrices and their descriptive
//! statistics.

mod panel;
mod rca;

pub use panel::{load_export_csv, CsvSchema, ExportPanel};
pub use rca::{
    activation_candidates, binarize, compute_rca, density, transition_probabilities,
    ActivationMask, PresenceMatrix, RcaMatrix, TransitionMatrix,
};

use std::fmt::Display;
use std::sync::Arc;

use crate::grid::Grid;

/// Shared country/product labels for one panel and every matrix derived
/// from it. Countries index rows, products index columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    pub countries: Vec<String>,
    pub products: Vec<String>,
}

impl Axes {
    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn n_products(&self) -> usize {
        self.products.len()
    }

    pub fn country_index(&self, code: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == code)
    }

    pub fn product_index(&self, code: &str) -> Option<usize> {
        self.products.iter().position(|p| p == code)
    }
}

/// True when two matrices were built over the same axes.
pub fn same_axes(a: &Arc<Axes>, b: &Arc<Axes>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Renders a labeled country x product table: header row of product codes,
/// one row per country with its code in the first column.
pub(crate) fn labeled_matrix_csv<T: Display>(axes: &Axes, grid: &Grid<T>) -> String {
    let mut out = String::new();
    out.push_str("country");
    for p in &axes.products {
        out.push(',');
        out.push_str(p);
    }
    out.push('\n');
    for (c, code) in axes.countries.iter().enumerate() {
        out.push_str(code);
        for v in grid.row(c) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}
