//! The CLI subcommands. Each one loads data, runs the deterministic
//! pipeline and writes its artifacts plus a hashed manifest into the
//! output directory.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use tradecast_core::metrics::{calibration_curve, restrict_to_task, MetricsReport, Task};
use tradecast_core::models::{export_tree_dot, feature_importance, Model, RegNode, TreeNode};
use tradecast_core::trade::{density, transition_probabilities};

use crate::config::{ExperimentConfig, ModelKind};
use crate::manifest::RunWriter;
use crate::pipeline::{
    activation_mask_for, load_data, presence_at, thread_pool, train_and_score, evaluate_both_tasks,
    ScoreRun,
};

fn resolved_config_json(cfg: &ExperimentConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(cfg)?)
}

fn meta_csv(run: &ScoreRun) -> String {
    let mut out = String::from("product,fold,seed,train_rows\n");
    for m in &run.unit_meta {
        let fold = m.fold.map(|f| f.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{fold},{},{}", m.product, m.seed, m.train_rows);
    }
    out
}

fn timings_csv(run: &ScoreRun) -> String {
    let mut out = String::from("product,fold,wall_ms\n");
    for m in &run.unit_meta {
        let fold = m.fold.map(|f| f.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{fold},{:.3}", m.product, m.wall_ms);
    }
    out
}

fn report_json(report: &MetricsReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Density per year plus the binary transition matrices anchored at the
/// first year, one per requested horizon.
pub fn cmd_describe(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let panel = &data.panel;
    let mut writer = RunWriter::create(&cfg.out_dir, cfg.seed)?;
    writer.write("run_config.json", &resolved_config_json(cfg)?)?;

    let mut density_csv = String::from("year,density\n");
    for &year in panel.years() {
        if year < cfg.window.first_year || year > cfg.window.last_year {
            continue;
        }
        let m = presence_at(panel, cfg, year)?;
        let _ = writeln!(density_csv, "{year},{}", density(&m)?);
    }
    writer.write("density.csv", &density_csv)?;

    let anchor = cfg.window.first_year;
    let m0 = presence_at(panel, cfg, anchor)?;
    let mut transitions_csv = String::from("delta,p00,p01,p10,p11\n");
    for &delta in &cfg.forecast.eval_deltas {
        let year = anchor + delta;
        if year > cfg.window.last_year || year > panel.last_year() {
            continue;
        }
        let m1 = presence_at(panel, cfg, year)?;
        let t = transition_probabilities(&m0, &m1)?;
        let cell = |row: usize, col: usize| -> String {
            t.rows[row]
                .map(|r| r[col].to_string())
                .unwrap_or_default()
        };
        let _ = writeln!(
            transitions_csv,
            "{delta},{},{},{},{}",
            cell(0, 0),
            cell(0, 1),
            cell(1, 0),
            cell(1, 1)
        );
    }
    writer.write("transitions.csv", &transitions_csv)?;
    writer.finish()?;
    println!("describe: wrote density.csv and transitions.csv to {}", cfg.out_dir.display());
    Ok(())
}

/// Full experiment: train, assemble, evaluate both tasks, write
/// everything.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let panel = &data.panel;
    let y_last = cfg.window.last_year;
    let delta = cfg.forecast.delta_model;
    let input_year = y_last - delta;

    let pool = thread_pool(cfg.workers)?;
    let run = pool.install(|| train_and_score(panel, cfg, y_last, input_year))?;
    let y_test = presence_at(panel, cfg, y_last)?;
    let mask = activation_mask_for(panel, cfg, input_year)?;
    let (full, activations) =
        evaluate_both_tasks(&run.scores, &y_test, &mask, cfg.eval.precision_k)?;

    let mut writer = RunWriter::create(&cfg.out_dir, cfg.seed)?;
    writer.write("run_config.json", &resolved_config_json(cfg)?)?;
    writer.write("scores.csv", &run.scores.to_csv_string())?;
    writer.write("metrics_full.json", &report_json(&full)?)?;
    writer.write("metrics_activations.json", &report_json(&activations)?)?;
    writer.write("models_meta.csv", &meta_csv(&run))?;
    writer.write_volatile("timings.csv", &timings_csv(&run))?;
    writer.finish()?;
    println!(
        "run: {} task mP@{} {:.4} | activations mP@{} {:.4} -> {}",
        full.task,
        full.k,
        full.precision_at_k,
        activations.k,
        activations.precision_at_k,
        cfg.out_dir.display()
    );
    Ok(())
}

/// Trains at a fixed horizon, then evaluates the same scores against
/// every requested horizon, normalizing each indicator to its value at
/// the smallest one.
pub fn cmd_delta_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let panel = &data.panel;
    let mut deltas = cfg.forecast.eval_deltas.clone();
    if deltas.is_empty() {
        bail!("forecast.eval_deltas is empty");
    }
    deltas.sort_unstable();
    deltas.dedup();
    let max_delta = *deltas.last().unwrap();
    let y_ref = cfg.window.last_year - max_delta;
    if y_ref < cfg.window.first_year + 2 * cfg.forecast.delta_model {
        bail!(
            "eval deltas reach {max_delta} years past the reference year; \
             the window supports at most {}",
            cfg.window.last_year - (cfg.window.first_year + 2 * cfg.forecast.delta_model)
        );
    }

    let pool = thread_pool(cfg.workers)?;
    let run = pool.install(|| train_and_score(panel, cfg, y_ref, y_ref))?;
    let mask = activation_mask_for(panel, cfg, y_ref)?;

    let indicators = [
        "auc_roc",
        "f1",
        "precision_at_k",
        "precision",
        "recall",
        "mcc",
        "auc_pr",
        "accuracy",
        "npv",
    ];
    let extract = |r: &MetricsReport| -> Vec<f64> {
        vec![
            r.auc_roc, r.f1, r.precision_at_k, r.precision, r.recall, r.mcc, r.auc_pr,
            r.accuracy, r.npv,
        ]
    };

    let mut rows: Vec<(String, i32, Vec<f64>)> = Vec::new();
    for &delta in &deltas {
        let test_year = y_ref + delta;
        let y_test = presence_at(panel, cfg, test_year)?;
        let (full, activations) =
            evaluate_both_tasks(&run.scores, &y_test, &mask, cfg.eval.precision_k)?;
        rows.push(("full".into(), delta, extract(&full)));
        rows.push(("activations".into(), delta, extract(&activations)));
    }

    let mut csv = String::from("task,delta");
    for name in indicators {
        let _ = write!(csv, ",{name},{name}_norm");
    }
    csv.push('\n');
    for (task, delta, values) in &rows {
        let anchor = rows
            .iter()
            .find(|(t, d, _)| t == task && *d == deltas[0])
            .map(|(_, _, v)| v.clone())
            .expect("anchor row exists");
        let _ = write!(csv, "{task},{delta}");
        for (i, v) in values.iter().enumerate() {
            let norm = if anchor[i] != 0.0 { v / anchor[i] } else { 0.0 };
            let _ = write!(csv, ",{v},{norm}");
        }
        csv.push('\n');
    }

    let mut writer = RunWriter::create(&cfg.out_dir, cfg.seed)?;
    writer.write("run_config.json", &resolved_config_json(cfg)?)?;
    writer.write("delta_sweep.csv", &csv)?;
    writer.write("models_meta.csv", &meta_csv(&run))?;
    writer.write_volatile("timings.csv", &timings_csv(&run))?;
    writer.finish()?;
    println!(
        "delta-sweep: {} horizons from reference year {y_ref} -> {}",
        deltas.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

/// Feature importance for one target product, optionally with a DOT
/// rendering of a single tree.
pub fn cmd_importance(cfg: &ExperimentConfig, product: &str, dot_tree: Option<usize>) -> Result<()> {
    let data = load_data(cfg)?;
    let panel = &data.panel;
    if panel.axes().product_index(product).is_none() {
        bail!("unknown product {product}");
    }
    if cfg.model.kind == ModelKind::Rca {
        bail!("the RCA benchmark has no feature importance; pick a trained model");
    }
    let y_last = cfg.window.last_year;
    let mut spec = tradecast_core::dataset::StackSpec::new(
        cfg.window.first_year,
        y_last,
        cfg.forecast.delta_model,
    );
    spec.rca_threshold = cfg.forecast.rca_threshold;
    spec.span = cfg.train_span();
    let stack = tradecast_core::dataset::TrainingStack::build(panel, &spec)?;
    let set = stack.set_for(product)?;
    let product_idx = panel.axes().product_index(product).unwrap();
    let unit_seed = tradecast_core::seed::derive(cfg.seed, &[product_idx as u64, 0]);
    let model = crate::pipeline::fit_model_for(cfg, &set, unit_seed)?;
    let importance = feature_importance(&model)
        .map_err(|e| anyhow!("importance unavailable: {e}"))?;

    let mut order: Vec<usize> = (0..importance.len()).collect();
    order.sort_by(|&a, &b| {
        importance[b]
            .total_cmp(&importance[a])
            .then(panel.products()[a].cmp(&panel.products()[b]))
    });
    let mut csv = String::from("product,importance\n");
    for &i in &order {
        let _ = writeln!(csv, "{},{}", panel.products()[i], importance[i]);
    }

    let mut writer = RunWriter::create(&cfg.out_dir, cfg.seed)?;
    writer.write("run_config.json", &resolved_config_json(cfg)?)?;
    writer.write(&format!("importance_{product}.csv"), &csv)?;
    if let Some(idx) = dot_tree {
        let dot = dot_for_tree(&model, idx, set.feature_names())?;
        writer.write(&format!("tree_{product}_{idx}.dot"), &dot)?;
    }
    writer.finish()?;
    println!(
        "importance: top feature for {product} is {} -> {}",
        panel.products()[order[0]],
        cfg.out_dir.display()
    );
    Ok(())
}

fn dot_for_tree(model: &Model, idx: usize, feature_names: &[String]) -> Result<String> {
    let tree: &TreeNode = match model {
        Model::Tree(t) => {
            if idx != 0 {
                bail!("a single tree has only index 0");
            }
            &t.root
        }
        Model::Forest(f) => f
            .trees
            .get(idx)
            .ok_or_else(|| anyhow!("tree {idx} out of range ({} trees)", f.trees.len()))?,
        Model::Boosted(b) => {
            let t: &RegNode = b
                .trees
                .get(idx)
                .ok_or_else(|| anyhow!("round {idx} out of range ({} trees)", b.trees.len()))?;
            return Ok(export_reg_tree_dot(t, feature_names));
        }
        Model::Logistic(_) => bail!("logistic models have no trees to export"),
    };
    Ok(export_tree_dot(tree, feature_names))
}

/// Boosted trees carry leaf values instead of class counts; render them
/// with the shared layout but value labels.
fn export_reg_tree_dot(tree: &RegNode, feature_names: &[String]) -> String {
    fn walk(node: &RegNode, names: &[String], next: &mut usize, out: &mut String) -> usize {
        let id = *next;
        *next += 1;
        match node {
            RegNode::Leaf { value } => {
                let _ = writeln!(out, "  n{id} [label=\"{value:.4}\"];");
            }
            RegNode::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let name = names.get(*feature).map(String::as_str).unwrap_or("?");
                let _ = writeln!(out, "  n{id} [label=\"{name} <= {threshold}\"];");
                let l = walk(left, names, next, out);
                let _ = writeln!(out, "  n{id} -> n{l} [label=\"<=\"];");
                let r = walk(right, names, next, out);
                let _ = writeln!(out, "  n{id} -> n{r} [label=\">\"];");
            }
        }
        id
    }
    let mut out = String::from("digraph boosted_tree {\n  node [shape=box, fontname=\"helvetica\"];\n");
    let mut next = 0;
    walk(tree, feature_names, &mut next, &mut out);
    out.push_str("}\n");
    out
}

/// Calibration curves for both tasks from a fresh deterministic run.
pub fn cmd_calibrate(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let panel = &data.panel;
    let y_last = cfg.window.last_year;
    let input_year = y_last - cfg.forecast.delta_model;
    let pool = thread_pool(cfg.workers)?;
    let run = pool.install(|| train_and_score(panel, cfg, y_last, input_year))?;
    let y_test = presence_at(panel, cfg, y_last)?;
    let mask = activation_mask_for(panel, cfg, input_year)?;

    let mut writer = RunWriter::create(&cfg.out_dir, cfg.seed)?;
    writer.write("run_config.json", &resolved_config_json(cfg)?)?;
    for task in [Task::Full, Task::Activations] {
        let eval = restrict_to_task(&run.scores, &y_test, task, Some(&mask))
            .with_context(|| format!("restricting to {task}"))?;
        let curve = calibration_curve(&eval.scores, &eval.labels, cfg.eval.calibration_bins, None)
            .with_context(|| format!("binning {task} scores"))?;
        writer.write(&format!("calibration_{task}.csv"), &curve.to_csv_string())?;
    }
    writer.write_volatile("timings.csv", &timings_csv(&run))?;
    writer.finish()?;
    println!("calibrate: curves for both tasks -> {}", cfg.out_dir.display());
    Ok(())
}

/// Generates a synthetic panel and writes it as CSV plus the ground
/// truth sidecar.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let truth = data
        .truth
        .as_ref()
        .ok_or_else(|| anyhow!("synth command needs data.kind = \"synth\""))?;
    let mut writer = RunWriter::create(&cfg.out_dir, cfg.seed)?;
    writer.write("run_config.json", &resolved_config_json(cfg)?)?;
    writer.write("exports.csv", &data.panel.to_csv_string())?;
    writer.write("truth.json", &serde_json::to_string_pretty(truth)?)?;
    writer.finish()?;
    println!(
        "synth: {} countries x {} products x {} years -> {}",
        data.panel.countries().len(),
        data.panel.products().len(),
        data.panel.years().len(),
        cfg.out_dir.display()
    );
    Ok(())
}
