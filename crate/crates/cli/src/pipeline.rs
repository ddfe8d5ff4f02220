//! Data loading, parallel per-(product, fold) training, score-matrix
//! assembly with the cross-validation coverage audit, and evaluation.
//!
//! Work units are independent; each derives its RNG stream from
//! `(master seed, product, fold)`, so results are identical whatever the
//! worker count.

use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use tradecast_core::dataset::{make_folds, FoldPlan, StackSpec, TrainingStack};
use tradecast_core::metrics::{compute_report, restrict_to_task, MetricsReport, Task};
use tradecast_core::models::{
    fit_boosted, fit_forest, fit_logistic, fit_tree, rca_benchmark, Model, ScoreMatrix,
    ScoreMatrixBuilder,
};
use tradecast_core::seed;
use tradecast_core::synth::{generate_panel, random_world, CapabilityWorld, GroundTruth};
use tradecast_core::trade::{
    activation_candidates, binarize, compute_rca, load_export_csv, ActivationMask, CsvSchema,
    ExportPanel, PresenceMatrix,
};

use crate::config::{DataKind, ExperimentConfig, ModelKind};

/// A panel plus, for synthetic sources, the generator's ground truth.
pub struct LoadedData {
    pub panel: ExportPanel,
    pub world: Option<CapabilityWorld>,
    pub truth: Option<GroundTruth>,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    match cfg.data.kind {
        DataKind::Csv => {
            let path = cfg.data.path.as_ref().expect("validated");
            let panel = load_export_csv(path, &CsvSchema::default())
                .with_context(|| format!("loading {}", path.display()))?;
            Ok(LoadedData {
                panel,
                world: None,
                truth: None,
            })
        }
        DataKind::Synth => {
            let synth = cfg.data.synth.as_ref().expect("validated");
            let world_seed = synth.world_seed.unwrap_or(cfg.seed);
            let world = random_world(&synth.world, world_seed)?;
            let out = generate_panel(&world, synth.years, synth.first_year)?;
            Ok(LoadedData {
                panel: out.panel,
                world: Some(world),
                truth: Some(out.truth),
            })
        }
    }
}

/// Provenance and cost of one fitted (product, fold) unit.
#[derive(Debug, Clone, Serialize)]
pub struct UnitMeta {
    pub product: String,
    pub fold: Option<usize>,
    pub seed: u64,
    pub train_rows: usize,
    #[serde(skip)]
    pub wall_ms: f64,
}

pub struct ScoreRun {
    pub scores: ScoreMatrix,
    pub unit_meta: Vec<UnitMeta>,
    pub plan: Option<FoldPlan>,
}

/// Fits the configured model kind on one supervised set.
pub fn fit_model_for(
    cfg: &ExperimentConfig,
    set: &tradecast_core::dataset::SupervisedSet,
    unit_seed: u64,
) -> Result<Model> {
    let model = match cfg.model.kind {
        ModelKind::Tree => Model::Tree(fit_tree(set, &cfg.model.tree.to_params(), unit_seed)?),
        ModelKind::Forest => {
            Model::Forest(fit_forest(set, &cfg.model.forest.params, unit_seed)?)
        }
        ModelKind::Boosted => Model::Boosted(fit_boosted(set, &cfg.model.boosted.params)?),
        ModelKind::Logistic => Model::Logistic(fit_logistic(set, &cfg.model.logistic.params)?),
        ModelKind::Rca => unreachable!("benchmark bypasses training"),
    };
    Ok(model)
}

/// Builds a thread pool honoring the worker cap (0 = all cores).
pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    builder.build().context("cannot build worker pool")
}

/// Trains every (product, fold) unit and assembles the complete score
/// matrix for `input_year + delta_model`.
///
/// Training stacks features from `[y0, train_last - 2*delta]` (labels
/// shifted by delta); the fitted models score the RCA matrix of
/// `input_year`. The plain run uses `train_last = y_last` and
/// `input_year = y_last - delta`; the horizon sweep anchors both at its
/// reference year.
pub fn train_and_score(
    panel: &ExportPanel,
    cfg: &ExperimentConfig,
    train_last: i32,
    input_year: i32,
) -> Result<ScoreRun> {
    let x_input = compute_rca(panel, input_year)?;
    let target_year = input_year + cfg.forecast.delta_model;
    if cfg.model.kind == ModelKind::Rca {
        let mut scores = rca_benchmark(&x_input);
        scores.year = target_year;
        return Ok(ScoreRun {
            scores,
            unit_meta: Vec::new(),
            plan: None,
        });
    }

    let mut spec = StackSpec::new(cfg.window.first_year, train_last, cfg.forecast.delta_model);
    spec.rca_threshold = cfg.forecast.rca_threshold;
    spec.span = cfg.train_span();
    let stack = TrainingStack::build(panel, &spec)?;

    let plan = if cfg.cv.enabled {
        Some(make_folds(
            panel.countries(),
            cfg.cv.k,
            seed::derive(cfg.seed, &[0xf01d]),
        )?)
    } else {
        None
    };

    // Row filters per fold are shared across products; carve them once.
    let fold_stacks: Vec<TrainingStack> = match &plan {
        None => Vec::new(),
        Some(plan) => (0..plan.k())
            .map(|fold| {
                stack.filter_countries(|country| plan.fold_of(country) != Some(fold))
            })
            .collect::<tradecast_core::Result<_>>()?,
    };

    struct UnitResult {
        product_idx: usize,
        fold: Option<usize>,
        cells: Vec<(usize, f64)>,
        meta: UnitMeta,
    }

    let folds: Vec<Option<usize>> = match &plan {
        None => vec![None],
        Some(plan) => (0..plan.k()).map(Some).collect(),
    };
    let units: Vec<(usize, Option<usize>)> = (0..panel.products().len())
        .flat_map(|p| folds.iter().map(move |f| (p, *f)))
        .collect();

    let results: Vec<UnitResult> = units
        .par_iter()
        .map(|&(product_idx, fold)| -> Result<UnitResult> {
            let started = Instant::now();
            let code = &panel.products()[product_idx];
            let train_stack = match fold {
                None => &stack,
                Some(f) => &fold_stacks[f],
            };
            let set = train_stack.set_for(code)?;
            let unit_seed = seed::derive(
                cfg.seed,
                &[product_idx as u64, fold.map(|f| f as u64 + 1).unwrap_or(0)],
            );
            let model = fit_model_for(cfg, &set, unit_seed)
                .with_context(|| format!("fitting product {code} fold {fold:?}"))?;
            let cells: Vec<(usize, f64)> = panel
                .countries()
                .iter()
                .enumerate()
                .filter(|(_, country)| match (fold, &plan) {
                    (Some(f), Some(plan)) => plan.fold_of(country) == Some(f),
                    _ => true,
                })
                .map(|(c, _)| (c, model.score_row(x_input.values.row(c))))
                .collect();
            Ok(UnitResult {
                product_idx,
                fold,
                cells,
                meta: UnitMeta {
                    product: code.clone(),
                    fold,
                    seed: unit_seed,
                    train_rows: set.len(),
                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                },
            })
        })
        .collect::<Result<_>>()?;

    let mut builder = ScoreMatrixBuilder::new(Arc::clone(panel.axes()), target_year);
    let mut unit_meta = Vec::with_capacity(results.len());
    for unit in results {
        let tag = unit.fold.map(|f| f as u32).unwrap_or(0);
        for (c, score) in &unit.cells {
            builder.set(*c, unit.product_idx, *score, tag)?;
        }
        unit_meta.push(unit.meta);
    }
    if let Some(plan) = &plan {
        audit_cv_coverage(&builder, plan, panel.countries())?;
    }
    Ok(ScoreRun {
        scores: builder.finish()?,
        unit_meta,
        plan,
    })
}

/// Asserts that every cell was filled by the fold owning its country,
/// i.e. by a model that never saw that country during training.
fn audit_cv_coverage(
    builder: &ScoreMatrixBuilder,
    plan: &FoldPlan,
    countries: &[String],
) -> Result<()> {
    let sources = builder.sources();
    for (c, country) in countries.iter().enumerate() {
        let expected = plan
            .fold_of(country)
            .ok_or_else(|| anyhow!("country {country} missing from fold plan"))? as i64;
        for p in 0..sources.cols() {
            let got = sources.at(c, p);
            if got != expected {
                bail!(
                    "cross-validation audit: cell ({country}, product {p}) \
                     filled by fold {got}, expected {expected}"
                );
            }
        }
    }
    Ok(())
}

/// Presence matrix observed at `year`, under the configured threshold.
pub fn presence_at(panel: &ExportPanel, cfg: &ExperimentConfig, year: i32) -> Result<PresenceMatrix> {
    Ok(binarize(
        &compute_rca(panel, year)?,
        cfg.forecast.rca_threshold,
    )?)
}

/// Activation candidates observed through the information boundary (the
/// input year): cells whose RCA never reached the inactivity threshold
/// in `[first_year, input_year]`.
pub fn activation_mask_for(
    panel: &ExportPanel,
    cfg: &ExperimentConfig,
    input_year: i32,
) -> Result<ActivationMask> {
    Ok(activation_candidates(
        panel,
        (cfg.window.first_year, input_year),
        cfg.forecast.inactivity_threshold,
    )?)
}

/// Reports for the full-matrix task and the activations task.
pub fn evaluate_both_tasks(
    scores: &ScoreMatrix,
    y_test: &PresenceMatrix,
    mask: &ActivationMask,
    precision_k: usize,
) -> Result<(MetricsReport, MetricsReport)> {
    let full_eval = restrict_to_task(scores, y_test, Task::Full, None)?;
    let mut full = compute_report(&full_eval, precision_k)?;
    full.task = Task::Full;
    let act_eval = restrict_to_task(scores, y_test, Task::Activations, Some(mask))?;
    let mut activations = compute_report(&act_eval, precision_k)?;
    activations.task = Task::Activations;
    Ok((full, activations))
}
