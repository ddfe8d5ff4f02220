//! Batch experiment runner: loads a TOML experiment config, trains one
//! model per product (times one per fold under cross-validation),
//! assembles the score matrix and writes plot-ready CSV/JSON artifacts
//! with a hashed manifest.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;
