//! Forecasting the evolution of countries' export baskets.
//!
//! The crate turns yearly country x product export values into Balassa
//! comparative-advantage matrices, builds supervised sets that pair a
//! country's basket in year `y` with the presence of a target product in
//! year `y + delta`, trains per-product classifiers (CART trees, bagged
//! forests, Newton-boosted ensembles, a logistic baseline and the raw-RCA
//! benchmark), and evaluates the assembled score matrices with indicators
//! that stay meaningful under heavy class imbalance.
//!
//! Everything is deterministic: all randomness flows from explicit seeds
//! and results do not depend on thread scheduling.

pub mod dataset;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod models;
pub mod seed;
pub mod synth;
pub mod trade;

pub use error::{Error, Result};
pub use grid::Grid;
