//! End-to-end checks on planted capability worlds: model-vs-benchmark
//! ordering, cross-validated assembly coverage, and the DOT export
//! round-trip through an independent parser.

use std::sync::Arc;

use tradecast_core::dataset::{build_test, cv_filter, make_folds, FoldRole, StackSpec, TrainingStack};
use tradecast_core::metrics::{restrict_to_task, roc_auc, Task};
use tradecast_core::models::{
    export_tree_dot, fit_forest, fit_tree, rca_benchmark, CartParams, ForestParams, MaxFeatures,
    Model, ScoreMatrixBuilder,
};
use tradecast_core::seed;
use tradecast_core::synth::{generate_panel, random_world, WorldParams};
use tradecast_core::trade::activation_candidates;

fn planted_world_panel(seed_value: u64) -> tradecast_core::synth::SynthPanel {
    let params = WorldParams {
        n_countries: 30,
        n_products: 80,
        n_capabilities: 16,
        acquisition_rate: 0.05,
        ..WorldParams::default()
    };
    let world = random_world(&params, seed_value).unwrap();
    generate_panel(&world, 10, 2000).unwrap()
}

#[test]
fn forest_beats_rca_benchmark_on_activations() {
    let out = planted_world_panel(401);
    let panel = &out.panel;
    let delta = 3;
    let y_last = panel.last_year();
    let stack = TrainingStack::build(panel, &StackSpec::new(panel.first_year(), y_last, delta)).unwrap();
    let (x_test, y_test) = build_test(panel, y_last, delta, 1.0).unwrap();
    let mask = activation_candidates(panel, (panel.first_year(), y_last - delta), 0.25).unwrap();

    let params = ForestParams {
        n_trees: 30,
        ..ForestParams::default()
    };
    let mut builder = ScoreMatrixBuilder::new(Arc::clone(panel.axes()), y_last);
    for (p, code) in panel.products().iter().enumerate() {
        let set = stack.set_for(code).unwrap();
        let model = Model::Forest(
            fit_forest(&set, &params, seed::derive(77, &[p as u64])).unwrap(),
        );
        let scores = model.predict(&x_test.values).unwrap();
        for (c, &s) in scores.iter().enumerate() {
            builder.set(c, p, s, 0).unwrap();
        }
    }
    let forest_scores = builder.finish().unwrap();
    let bench_scores = rca_benchmark(&x_test);

    let forest_eval =
        restrict_to_task(&forest_scores, &y_test, Task::Activations, Some(&mask)).unwrap();
    let bench_eval =
        restrict_to_task(&bench_scores, &y_test, Task::Activations, Some(&mask)).unwrap();
    let forest_auc = roc_auc(&forest_eval.scores, &forest_eval.labels).unwrap();
    let bench_auc = roc_auc(&bench_eval.scores, &bench_eval.labels).unwrap();
    assert!(
        forest_auc > bench_auc,
        "forest {forest_auc:.3} should beat benchmark {bench_auc:.3}"
    );
}

#[test]
fn cross_validated_assembly_covers_each_country_once() {
    let out = planted_world_panel(402);
    let panel = &out.panel;
    let delta = 3;
    let y_last = panel.last_year();
    let stack = TrainingStack::build(panel, &StackSpec::new(panel.first_year(), y_last, delta)).unwrap();
    let (x_test, _) = build_test(panel, y_last, delta, 1.0).unwrap();
    let plan = make_folds(panel.countries(), 2, 9).unwrap();

    let params = CartParams {
        max_depth: Some(4),
        ..CartParams::default()
    };
    let mut builder = ScoreMatrixBuilder::new(Arc::clone(panel.axes()), y_last);
    for (p, code) in panel.products().iter().enumerate() {
        let set = stack.set_for(code).unwrap();
        for fold in 0..plan.k() {
            let train = cv_filter(&set, &plan, fold, FoldRole::Train).unwrap();
            let model = Model::Tree(fit_tree(&train, &params, seed::derive(5, &[p as u64, fold as u64])).unwrap());
            for (c, country) in panel.countries().iter().enumerate() {
                if plan.fold_of(country) == Some(fold) {
                    let score = model.score_row(x_test.values.row(c));
                    builder.set(c, p, score, fold as u32).unwrap();
                }
            }
        }
    }
    // Every cell must be covered by exactly the fold that owns the
    // country; finish() would fail on gaps, sources prove provenance.
    let sources = builder.sources().clone();
    for (c, country) in panel.countries().iter().enumerate() {
        for p in 0..panel.products().len() {
            assert_eq!(
                sources.at(c, p),
                plan.fold_of(country).unwrap() as i64,
                "cell ({country}, {p})"
            );
        }
    }
    builder.finish().unwrap();
}

#[test]
fn exported_dot_parses_and_matches_node_count() {
    let out = planted_world_panel(403);
    let panel = &out.panel;
    let stack = TrainingStack::build(panel, &StackSpec::new(2000, 2009, 3)).unwrap();
    let set = stack.set_for(&panel.products()[7]).unwrap();
    let tree = fit_tree(&set, &CartParams::default(), 11).unwrap();
    let dot = export_tree_dot(&tree.root, set.feature_names());

    let ast = dot_parser::ast::Graph::try_from(dot.as_str())
        .expect("exported DOT must parse under the grammar");
    let canonical = dot_parser::canonical::Graph::from(ast.filter_map(&|a| Some(a)));
    assert_eq!(canonical.nodes.set.len(), tree.root.node_count());
    // A binary tree has exactly nodes - 1 edges.
    assert_eq!(canonical.edges.set.len(), tree.root.node_count() - 1);
}

#[test]
fn forest_with_sqrt_features_is_deterministic_end_to_end() {
    let out = planted_world_panel(404);
    let panel = &out.panel;
    let stack = TrainingStack::build(panel, &StackSpec::new(2000, 2009, 3)).unwrap();
    let set = stack.set_for(&panel.products()[3]).unwrap();
    let params = ForestParams {
        n_trees: 8,
        max_features: MaxFeatures::Sqrt,
        ..ForestParams::default()
    };
    let a = fit_forest(&set, &params, 123).unwrap();
    let b = fit_forest(&set, &params, 123).unwrap();
    assert_eq!(a, b);
}
