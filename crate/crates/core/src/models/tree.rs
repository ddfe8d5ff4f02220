use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SupervisedSet;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::seed;

/// Binary CART node. Rows with `feature <= threshold` go left, so the
/// low-value branch (typically "does not export") is always the left one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Rows that reached this node during fitting.
        n_samples: usize,
        /// Gini decrease weighted by the node's share of training rows;
        /// summed per feature this yields the usual impurity importance.
        impurity_decrease: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// `[n_zero, n_one]` class counts of the training rows.
        counts: [usize; 2],
        /// Positive fraction `n_one / (n_zero + n_one)`.
        score: f64,
    },
}

impl TreeNode {
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { score, .. } => return *score,
                TreeNode::Split {
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

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    /// Adds each split's weighted impurity decrease to `acc[feature]`.
    pub(crate) fn accumulate_importance(&self, acc: &mut [f64]) {
        if let TreeNode::Split {
            feature,
            impurity_decrease,
            left,
            right,
            ..
        } = self
        {
            acc[*feature] += impurity_decrease;
            left.accumulate_importance(acc);
            right.accumulate_importance(acc);
        }
    }
}

/// CART fitting controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    /// `None` grows until purity or `min_samples_leaf`.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined per node, sampled without replacement;
    /// `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

/// A fitted classification tree together with its input arity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub root: TreeNode,
    pub n_features: usize,
}

impl TreeModel {
    pub fn score_row(&self, row: &[f64]) -> f64 {
        self.root.score_row(row)
    }
}

/// Greedy CART on Gini impurity.
///
/// Candidate thresholds are midpoints between consecutive distinct sorted
/// feature values; the split minimizing the weighted child impurity wins,
/// ties broken by lowest feature index then lowest threshold. Recursion
/// stops at `max_depth`, at `min_samples_leaf`, on purity, or when no
/// split strictly reduces the impurity.
pub fn fit_tree(set: &SupervisedSet, params: &CartParams, seed_value: u64) -> Result<TreeModel> {
    if set.is_empty() {
        return Err(Error::validation("cannot fit a tree on an empty set"));
    }
    let rows: Vec<usize> = (0..set.len()).collect();
    let mut rng = seed::rng(seed_value);
    let root = grow(
        set.features(),
        set.labels(),
        rows,
        params,
        set.len(),
        0,
        &mut rng,
    );
    Ok(TreeModel {
        root,
        n_features: set.n_features(),
    })
}

/// Same as [`fit_tree`] but restricted to `rows` (bootstrap resamples may
/// repeat indices) and driven by a caller-owned RNG.
pub(crate) fn fit_tree_on(
    features: &Grid<f64>,
    labels: &[u8],
    rows: Vec<usize>,
    params: &CartParams,
    rng: &mut ChaCha8Rng,
) -> Result<TreeNode> {
    if rows.is_empty() {
        return Err(Error::validation("cannot fit a tree on an empty set"));
    }
    let total = rows.len();
    Ok(grow(features, labels, rows, params, total, 0, rng))
}

fn gini(c0: usize, c1: usize) -> f64 {
    let n = (c0 + c1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = c0 as f64 / n;
    let p1 = c1 as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    weighted_gini: f64,
}

fn grow(
    features: &Grid<f64>,
    labels: &[u8],
    rows: Vec<usize>,
    params: &CartParams,
    total_rows: usize,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let counts = count_classes(labels, &rows);
    let make_leaf = || TreeNode::Leaf {
        counts,
        score: counts[1] as f64 / (counts[0] + counts[1]) as f64,
    };
    let node_gini = gini(counts[0], counts[1]);
    let depth_reached = params.max_depth.is_some_and(|d| depth >= d);
    if node_gini == 0.0 || depth_reached || rows.len() < 2 * params.min_samples_leaf {
        return make_leaf();
    }
    let candidates = candidate_features(features.cols(), params.max_features, rng);
    let Some(best) = best_split(features, labels, &rows, &candidates, params.min_samples_leaf, node_gini)
    else {
        return make_leaf();
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&r| features.at(r, best.feature) <= best.threshold);
    let n = rows.len();
    let decrease = (n as f64 / total_rows as f64) * (node_gini - best.weighted_gini);
    let left = grow(features, labels, left_rows, params, total_rows, depth + 1, rng);
    let right = grow(features, labels, right_rows, params, total_rows, depth + 1, rng);
    TreeNode::Split {
        feature: best.feature,
        threshold: best.threshold,
        n_samples: n,
        impurity_decrease: decrease,
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn count_classes(labels: &[u8], rows: &[usize]) -> [usize; 2] {
    let mut counts = [0usize; 2];
    for &r in rows {
        counts[labels[r] as usize] += 1;
    }
    counts
}

/// Feature indices examined at one node, in ascending order so the
/// lowest-index tie rule is preserved under subsampling.
fn candidate_features(
    n_features: usize,
    max_features: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    match max_features {
        None => (0..n_features).collect(),
        Some(m) if m >= n_features => (0..n_features).collect(),
        Some(m) => {
            use rand::seq::SliceRandom;
            let mut all: Vec<usize> = (0..n_features).collect();
            all.partial_shuffle(rng, m);
            let mut picked: Vec<usize> = all[..m].to_vec();
            picked.sort_unstable();
            picked
        }
    }
}

fn best_split(
    features: &Grid<f64>,
    labels: &[u8],
    rows: &[usize],
    candidate_feats: &[usize],
    min_samples_leaf: usize,
    parent_gini: f64,
) -> Option<BestSplit> {
    let n = rows.len();
    let mut best: Option<BestSplit> = None;
    let mut column: Vec<(f64, u8)> = Vec::with_capacity(n);
    for &feature in candidate_feats {
        column.clear();
        column.extend(rows.iter().map(|&r| (features.at(r, feature), labels[r])));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total1: usize = column.iter().filter(|(_, y)| *y == 1).count();
        let mut left0 = 0usize;
        let mut left1 = 0usize;
        for i in 0..n - 1 {
            if column[i].1 == 1 {
                left1 += 1;
            } else {
                left0 += 1;
            }
            let value = column[i].0;
            let next = column[i + 1].0;
            if value == next {
                continue;
            }
            let n_left = i + 1;
            let n_right = n - n_left;
            if n_left < min_samples_leaf || n_right < min_samples_leaf {
                continue;
            }
            let threshold = (value + next) / 2.0;
            // Adjacent floats can round the midpoint onto the right
            // value, which would break the `<= threshold` partition.
            if threshold >= next {
                continue;
            }
            let right1 = total1 - left1;
            let right0 = n_right - right1;
            let weighted = (n_left as f64 / n as f64) * gini(left0, left1)
                + (n_right as f64 / n as f64) * gini(right0, right1);
            if weighted >= parent_gini {
                continue;
            }
            let improves = match &best {
                None => true,
                Some(b) => weighted < b.weighted_gini,
            };
            if improves {
                best = Some(BestSplit {
                    feature,
                    threshold,
                    weighted_gini: weighted,
                });
            }
        }
    }
    best
}

/// Renders a fitted tree as a Graphviz digraph. Internal nodes carry the
/// feature name and threshold, leaves carry `[n_zero, n_one]` and a fill
/// color interpolated from orange (all zeros) to blue (all ones). The
/// left edge is the `<=` branch.
pub fn export_tree_dot(tree: &TreeNode, feature_names: &[String]) -> String {
    let mut out = String::from("digraph decision_tree {\n");
    out.push_str("  node [shape=box, style=filled, fontname=\"helvetica\"];\n");
    out.push_str("  edge [fontname=\"helvetica\"];\n");
    let mut next_id = 0usize;
    write_node(tree, feature_names, &mut next_id, &mut out);
    out.push_str("}\n");
    out
}

fn write_node(
    node: &TreeNode,
    feature_names: &[String],
    next_id: &mut usize,
    out: &mut String,
) -> usize {
    let id = *next_id;
    *next_id += 1;
    match node {
        TreeNode::Leaf { counts, score } => {
            out.push_str(&format!(
                "  n{id} [label=\"[{}, {}]\", fillcolor=\"{}\"];\n",
                counts[0],
                counts[1],
                class_color(*score)
            ));
        }
        TreeNode::Split {
            feature,
            threshold,
            n_samples,
            left,
            right,
            ..
        } => {
            let name = feature_names
                .get(*feature)
                .map(String::as_str)
                .unwrap_or("?");
            out.push_str(&format!(
                "  n{id} [label=\"{name} <= {threshold}\\nsamples = {n_samples}\", fillcolor=\"#ffffff\"];\n"
            ));
            let l = write_node(left, feature_names, next_id, out);
            out.push_str(&format!("  n{id} -> n{l} [label=\"<=\"];\n"));
            let r = write_node(right, feature_names, next_id, out);
            out.push_str(&format!("  n{id} -> n{r} [label=\">\"];\n"));
        }
    }
    id
}

/// Linear interpolation between orange (`score == 0`) and blue
/// (`score == 1`).
fn class_color(score: f64) -> String {
    let orange = (0xe5u32, 0x81u32, 0x39u32);
    let blue = (0x39u32, 0x9du32, 0xe5u32);
    let mix = |a: u32, b: u32| -> u32 {
        (a as f64 + (b as f64 - a as f64) * score).round() as u32
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(orange.0, blue.0),
        mix(orange.1, blue.1),
        mix(orange.2, blue.2)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_training, StackSpec};
    use crate::trade::ExportPanel;
    use rand::Rng;

    fn tiny_set(xs: &[&[f64]], ys: &[u8]) -> SupervisedSet {
        crate::models::tests::set_from_matrix(xs, ys)
    }

    #[test]
    fn pure_root_is_single_leaf() {
        let set = tiny_set(&[&[0.1, 0.2], &[0.3, 0.4], &[0.5, 0.6]], &[1, 1, 1]);
        let tree = fit_tree(&set, &CartParams::default(), 0).unwrap();
        assert_eq!(tree.root, TreeNode::Leaf { counts: [0, 3], score: 1.0 });
    }

    #[test]
    fn separable_single_feature_splits_cleanly() {
        let set = tiny_set(
            &[&[0.1], &[0.2], &[0.4], &[0.8], &[0.9], &[1.2]],
            &[0, 0, 0, 1, 1, 1],
        );
        let tree = fit_tree(&set, &CartParams::default(), 0).unwrap();
        match &tree.root {
            TreeNode::Split { feature, threshold, left, right, .. } => {
                assert_eq!(*feature, 0);
                assert!((threshold - 0.6).abs() < 1e-12);
                assert!(left.is_leaf() && right.is_leaf());
                assert_eq!(left.score_row(&[0.0]), 0.0);
                assert_eq!(right.score_row(&[0.0]), 1.0);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(tree.score_row(&[0.3]), 0.0);
        assert_eq!(tree.score_row(&[0.7]), 1.0);
    }

    /// Exhaustive (feature, threshold) enumeration with from-scratch
    /// recounting; independent of the sweep in `best_split`.
    pub(crate) fn brute_force_root(
        xs: &Grid<f64>,
        ys: &[u8],
    ) -> Option<(usize, f64, f64)> {
        let n = xs.rows();
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..xs.cols() {
            let mut vals: Vec<f64> = (0..n).map(|r| xs.at(r, f)).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for pair in vals.windows(2) {
                let t = (pair[0] + pair[1]) / 2.0;
                if t >= pair[1] {
                    continue;
                }
                let mut l = [0usize; 2];
                let mut r = [0usize; 2];
                for i in 0..n {
                    if xs.at(i, f) <= t {
                        l[ys[i] as usize] += 1;
                    } else {
                        r[ys[i] as usize] += 1;
                    }
                }
                let nl = l[0] + l[1];
                let nr = r[0] + r[1];
                if nl == 0 || nr == 0 {
                    continue;
                }
                let gini_of = |c: [usize; 2]| {
                    let m = (c[0] + c[1]) as f64;
                    let p0 = c[0] as f64 / m;
                    let p1 = c[1] as f64 / m;
                    1.0 - p0 * p0 - p1 * p1
                };
                let w = (nl as f64 / n as f64) * gini_of(l) + (nr as f64 / n as f64) * gini_of(r);
                let total = [l[0] + r[0], l[1] + r[1]];
                if w >= gini_of(total) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((_, _, bw)) => w < bw,
                };
                if better {
                    best = Some((f, t, w));
                }
            }
        }
        best
    }

    #[test]
    fn root_split_matches_exhaustive_enumeration() {
        let mut rng = crate::seed::rng(31);
        for case in 0..40 {
            let n = rng.gen_range(4..=12);
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..2).map(|_| (rng.gen_range(0..8) as f64) / 4.0).collect())
                .collect();
            let ys: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            let refs: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
            let set = tiny_set(&refs, &ys);
            let tree = fit_tree(&set, &CartParams::default(), 0).unwrap();
            let expected = brute_force_root(set.features(), set.labels());
            match (&tree.root, expected) {
                (TreeNode::Leaf { .. }, None) => {}
                (TreeNode::Split { feature, threshold, .. }, Some((f, t, _))) => {
                    assert_eq!((*feature, *threshold), (f, t), "case {case}");
                }
                (node, exp) => panic!("case {case}: impl {node:?} vs oracle {exp:?}"),
            }
        }
    }

    #[test]
    fn accepted_splits_never_increase_gini() {
        fn check(node: &TreeNode) {
            if let TreeNode::Split { impurity_decrease, left, right, .. } = node {
                assert!(*impurity_decrease > 0.0);
                check(left);
                check(right);
            }
        }
        let mut rng = crate::seed::rng(77);
        for _ in 0..10 {
            let xs: Vec<Vec<f64>> = (0..20)
                .map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect();
            let ys: Vec<u8> = (0..20).map(|_| rng.gen_range(0..2) as u8).collect();
            let refs: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
            let set = tiny_set(&refs, &ys);
            let tree = fit_tree(&set, &CartParams::default(), 0).unwrap();
            check(&tree.root);
        }
    }

    #[test]
    fn min_samples_leaf_blocks_small_children() {
        let set = tiny_set(&[&[0.0], &[1.0], &[2.0], &[3.0]], &[0, 0, 1, 1]);
        let params = CartParams {
            min_samples_leaf: 3,
            ..CartParams::default()
        };
        let tree = fit_tree(&set, &params, 0).unwrap();
        assert!(tree.root.is_leaf());
    }

    #[test]
    fn max_depth_zero_is_root_leaf() {
        let set = tiny_set(&[&[0.0], &[1.0]], &[0, 1]);
        let params = CartParams {
            max_depth: Some(0),
            ..CartParams::default()
        };
        let tree = fit_tree(&set, &params, 0).unwrap();
        assert_eq!(tree.root, TreeNode::Leaf { counts: [1, 1], score: 0.5 });
    }

    #[test]
    fn manual_traversal_matches_predict() {
        let set = tiny_set(
            &[&[0.1, 0.9], &[0.2, 0.1], &[0.9, 0.8], &[0.8, 0.2]],
            &[0, 0, 1, 1],
        );
        let tree = fit_tree(&set, &CartParams::default(), 0).unwrap();
        // Walk by hand for one input.
        let probe = [0.85, 0.5];
        let mut node = &tree.root;
        let manual = loop {
            match node {
                TreeNode::Leaf { score, .. } => break *score,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    node = if probe[*feature] <= *threshold { left } else { right };
                }
            }
        };
        assert_eq!(manual, tree.score_row(&probe));
    }

    #[test]
    fn dot_export_shape() {
        let set = tiny_set(&[&[0.0], &[1.0], &[2.0], &[3.0]], &[0, 0, 1, 1]);
        let tree = fit_tree(&set, &CartParams::default(), 0).unwrap();
        let dot = export_tree_dot(&tree.root, &["widgets".into()]);
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("widgets <= "));
        assert!(dot.contains("[label=\"<=\"]"));
        let node_lines = dot.lines().filter(|l| l.trim_start().starts_with('n') && l.contains("label") && !l.contains("->")).count();
        assert_eq!(node_lines, tree.root.node_count());
    }

    #[test]
    fn single_leaf_dot_is_one_node() {
        let leaf = TreeNode::Leaf { counts: [3, 1], score: 0.25 };
        let dot = export_tree_dot(&leaf, &[]);
        assert_eq!(dot.matches("label").count(), 1);
        assert!(!dot.contains("->"));
    }

    #[test]
    fn leaf_color_interpolates() {
        assert_eq!(class_color(0.0), "#e58139");
        assert_eq!(class_color(1.0), "#399de5");
        let mid = class_color(0.5);
        assert!(mid.starts_with('#') && mid.len() == 7);
    }

    #[test]
    fn trained_on_panel_data_end_to_end() {
        // Smoke test on a real panel-built set rather than a synthetic
        // matrix.
        let mut rng = crate::seed::rng(5);
        let years: Vec<i32> = (2000..=2006).collect();
        let values = years
            .iter()
            .map(|_| Grid::from_fn(6, 5, |_, _| rng.gen_range(0.0..50.0)))
            .collect();
        let panel = ExportPanel::new(
            years,
            (0..6).map(|c| format!("C{c}")).collect(),
            (0..5).map(|p| format!("p{p}")).collect(),
            values,
        )
        .unwrap();
        let set = build_training(&panel, "p3", &StackSpec::new(2000, 2006, 2)).unwrap();
        let tree = fit_tree(&set, &CartParams::default(), 9).unwrap();
        for i in 0..set.len() {
            let s = tree.score_row(set.features().row(i));
            assert!((0.0..=1.0).contains(&s));
        }
    }
}
