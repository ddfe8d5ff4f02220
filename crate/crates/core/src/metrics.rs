//! Evaluation of score matrices against observed presence matrices:
//! confusion-matrix indicators at the F1-optimal threshold, rank metrics
//! with tie handling, per-country precision@k and logarithmic calibration
//! curves. Degenerate 0/0 indicators are defined as 0 and flagged rather
//! than erroring, since heavily imbalanced tasks hit them routinely.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ScoreMatrix;
use crate::trade::{same_axes, ActivationMask, PresenceMatrix};

/// Which cells of the matrix are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Every (country, product) cell.
    Full,
    /// Only activation candidates: cells whose RCA never reached the
    /// inactivity threshold in the observation window.
    Activations,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Full => write!(f, "full"),
            Task::Activations => write!(f, "activations"),
        }
    }
}

/// Flat view of the evaluated cells, with enough identity left to group
/// by country and break score ties by product order.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub countries: Vec<usize>,
    pub products: Vec<usize>,
    pub n_countries: usize,
}

impl EvalSet {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Pairs scores with truth labels over the task's cells.
pub fn restrict_to_task(
    scores: &ScoreMatrix,
    truth: &PresenceMatrix,
    task: Task,
    mask: Option<&ActivationMask>,
) -> Result<EvalSet> {
    if !same_axes(&scores.axes, &truth.axes) {
        return Err(Error::validation(
            "score and truth matrices have different axes".to_string(),
        ));
    }
    let keep: Box<dyn Fn(usize, usize) -> bool> = match task {
        Task::Full => Box::new(|_, _| true),
        Task::Activations => {
            let mask = mask.ok_or_else(|| {
                Error::validation("activations task needs an activation mask".to_string())
            })?;
            if !same_axes(&scores.axes, &mask.axes) {
                return Err(Error::validation(
                    "activation mask has different axes".to_string(),
                ));
            }
            let values = mask.values.clone();
            Box::new(move |c, p| values.at(c, p) == 1)
        }
    };
    let n_c = scores.axes.n_countries();
    let n_p = scores.axes.n_products();
    let mut out = EvalSet {
        scores: Vec::new(),
        labels: Vec::new(),
        countries: Vec::new(),
        products: Vec::new(),
        n_countries: n_c,
    };
    for c in 0..n_c {
        for p in 0..n_p {
            if keep(c, p) {
                out.scores.push(scores.values.at(c, p));
                out.labels.push(truth.values.at(c, p) == 1);
                out.countries.push(c);
                out.products.push(p);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::validation("empty evaluation set".to_string()));
    }
    Ok(out)
}

/// Counts at a fixed threshold; a prediction is positive iff
/// `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fneg: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fneg + self.tn
    }
}

pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ConfusionMatrix> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::validation(format!(
            "confusion needs equal non-empty vectors, got {} and {}",
            scores.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix {
        tp: 0,
        fp: 0,
        fneg: 0,
        tn: 0,
    };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fneg += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// An indicator value plus a flag marking the 0/0 convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub value: f64,
    pub degenerate: bool,
}

fn rate(numerator: f64, denominator: f64) -> Rate {
    if denominator == 0.0 {
        Rate {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Rate {
            value: numerator / denominator,
            degenerate: false,
        }
    }
}

pub fn precision(cm: &ConfusionMatrix) -> Rate {
    rate(cm.tp as f64, (cm.tp + cm.fp) as f64)
}

pub fn recall(cm: &ConfusionMatrix) -> Rate {
    rate(cm.tp as f64, (cm.tp + cm.fneg) as f64)
}

pub fn f1(cm: &ConfusionMatrix) -> Rate {
    rate(
        2.0 * cm.tp as f64,
        (2 * cm.tp + cm.fp + cm.fneg) as f64,
    )
}

pub fn accuracy(cm: &ConfusionMatrix) -> Rate {
    rate((cm.tp + cm.tn) as f64, cm.total() as f64)
}

/// Negative predictive value, `tn / (tn + fn)`.
pub fn npv(cm: &ConfusionMatrix) -> Rate {
    rate(cm.tn as f64, (cm.tn + cm.fneg) as f64)
}

/// Matthews correlation coefficient; 0 (flagged) when any marginal is
/// empty, e.g. under constant predictions.
pub fn mcc(cm: &ConfusionMatrix) -> Rate {
    let tp = cm.tp as f64;
    let fp = cm.fp as f64;
    let fneg = cm.fneg as f64;
    let tn = cm.tn as f64;
    let denom = ((tp + fp) * (tp + fneg) * (tn + fp) * (tn + fneg)).sqrt();
    if denom == 0.0 {
        Rate {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Rate {
            value: (tp * tn - fp * fneg) / denom,
            degenerate: false,
        }
    }
}

/// Exhaustive scan over candidate thresholds (every distinct score plus
/// +inf); returns the threshold maximizing F1, lowest threshold on ties.
pub fn best_f1_threshold(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::validation("need equal non-empty vectors".to_string()));
    }
    let total_pos = labels.iter().filter(|&&y| y).count();
    if total_pos == 0 {
        return Err(Error::validation(
            "cannot optimize F1 without positive labels".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // Threshold +inf: nothing predicted positive, F1 = 0.
    let mut best_threshold = f64::INFINITY;
    let mut best_f1 = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        // Consume the whole tie group; the threshold equals its value.
        while i < order.len() && scores[order[i]] == value {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let fneg = total_pos - tp;
        let f = 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64;
        // `>=` so ties resolve to the lowest threshold seen last.
        if f >= best_f1 {
            best_f1 = f;
            best_threshold = value;
        }
    }
    Ok((best_threshold, best_f1))
}

/// Rank-based ROC-AUC with midrank tie correction, i.e.
/// `P(s+ > s-) + 1/2 P(s+ = s-)`.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::validation("need equal non-empty vectors".to_string()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::validation(
            "ROC-AUC needs both classes present".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        let start = i;
        while i < order.len() && scores[order[i]] == value {
            i += 1;
        }
        // Ranks are 1-based; the tie group start..i shares the midrank.
        let midrank = (start + 1 + i) as f64 / 2.0;
        for &idx in &order[start..i] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Area under the precision-recall curve by the step-wise rule
/// `sum (R_i - R_{i-1}) * P_i` over distinct-score thresholds; no linear
/// interpolation between points.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::validation("need equal non-empty vectors".to_string()));
    }
    let total_pos = labels.iter().filter(|&&y| y).count();
    if total_pos == 0 {
        return Err(Error::validation(
            "PR-AUC needs at least one positive label".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut area = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        while i < order.len() && scores[order[i]] == value {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Mean over countries of the precision among each country's top-k
/// scored candidate cells. Ties rank by product order; countries with
/// fewer than `k` candidates use all of them and normalize by that
/// count. Countries with no candidate cells are skipped.
pub fn mean_precision_at_k(eval: &EvalSet, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::validation("k must be at least 1".to_string()));
    }
    if eval.is_empty() {
        return Err(Error::validation("empty evaluation set".to_string()));
    }
    let mut per_country: Vec<Vec<(f64, usize, bool)>> = vec![Vec::new(); eval.n_countries];
    for i in 0..eval.len() {
        per_country[eval.countries[i]].push((eval.scores[i], eval.products[i], eval.labels[i]));
    }
    let mut sum = 0.0;
    let mut counted = 0usize;
    for cells in per_country.iter_mut() {
        if cells.is_empty() {
            continue;
        }
        cells.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let take = k.min(cells.len());
        let hits = cells[..take].iter().filter(|(_, _, y)| *y).count();
        sum += hits as f64 / take as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::validation("all candidate sets are empty".to_string()));
    }
    Ok(sum / counted as f64)
}

/// One logarithmic score bin of a calibration curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub low: f64,
    pub high: f64,
    pub mean_score: f64,
    pub positive_fraction: f64,
    /// Binomial standard deviation `sqrt(f (1 - f) / n)`.
    pub std: f64,
    pub count: usize,
}

/// Empirical positive fraction per logarithmic score bin. Zero-score
/// cells are excluded from the bins and counted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub bins: Vec<CalibrationBin>,
    pub zero_scores: usize,
}

impl CalibrationCurve {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("bin_low,bin_high,mean_score,positive_fraction,std,count\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                b.low, b.high, b.mean_score, b.positive_fraction, b.std, b.count
            ));
        }
        out
    }

    pub fn occupied_bins(&self) -> impl Iterator<Item = &CalibrationBin> {
        self.bins.iter().filter(|b| b.count > 0)
    }
}

/// Bins positive scores into `n_bins` log-spaced intervals between
/// `bounds` (or the observed positive score range) and reports the
/// empirical positive fraction per bin. The first bin extends down to
/// zero (exclusive) so the bins cover `(0, max]`.
pub fn calibration_curve(
    scores: &[f64],
    labels: &[bool],
    n_bins: usize,
    bounds: Option<(f64, f64)>,
) -> Result<CalibrationCurve> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::validation("need equal non-empty vectors".to_string()));
    }
    if n_bins < 2 {
        return Err(Error::validation("need at least 2 bins".to_string()));
    }
    let zero_scores = scores.iter().filter(|&&s| s <= 0.0).count();
    let positives: Vec<f64> = scores.iter().copied().filter(|&s| s > 0.0).collect();
    if positives.is_empty() {
        return Err(Error::validation("no positive scores to bin".to_string()));
    }
    let (lo, hi) = match bounds {
        Some((lo, hi)) => {
            if !(lo > 0.0 && hi >= lo) {
                return Err(Error::validation(format!(
                    "invalid calibration bounds ({lo}, {hi})"
                )));
            }
            (lo, hi)
        }
        None => (
            positives.iter().copied().fold(f64::MAX, f64::min),
            positives.iter().copied().fold(f64::MIN, f64::max),
        ),
    };
    let log_lo = lo.ln();
    let log_hi = hi.ln();
    let edges: Vec<f64> = (0..=n_bins)
        .map(|j| (log_lo + (log_hi - log_lo) * j as f64 / n_bins as f64).exp())
        .collect();
    // Upper-inclusive bins; scores outside the explicit bounds clamp
    // into the edge bins.
    let bin_of = |s: f64| -> usize {
        for (j, edge) in edges.iter().enumerate().skip(1) {
            if s <= *edge {
                return j - 1;
            }
        }
        n_bins - 1
    };
    let mut count = vec![0usize; n_bins];
    let mut pos = vec![0usize; n_bins];
    let mut score_sum = vec![0.0f64; n_bins];
    for (&s, &y) in scores.iter().zip(labels) {
        if s <= 0.0 {
            continue;
        }
        let b = bin_of(s);
        count[b] += 1;
        score_sum[b] += s;
        if y {
            pos[b] += 1;
        }
    }
    let bins = (0..n_bins)
        .map(|b| {
            let n = count[b];
            let fraction = if n == 0 { 0.0 } else { pos[b] as f64 / n as f64 };
            CalibrationBin {
                low: if b == 0 { 0.0 } else { edges[b] },
                high: edges[b + 1],
                mean_score: if n == 0 { 0.0 } else { score_sum[b] / n as f64 },
                positive_fraction: fraction,
                std: if n == 0 {
                    0.0
                } else {
                    (fraction * (1.0 - fraction) / n as f64).sqrt()
                },
                count: n,
            }
        })
        .collect();
    Ok(CalibrationCurve { bins, zero_scores })
}

/// Everything Table-1-shaped for one evaluation task, computed at the
/// F1-optimal threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub threshold: f64,
    pub auc_roc: f64,
    pub f1: f64,
    pub precision_at_k: f64,
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub mcc: f64,
    pub auc_pr: f64,
    pub accuracy: f64,
    pub npv: f64,
    pub confusion: ConfusionMatrix,
    pub evaluated_cells: usize,
    /// Indicators that hit the 0/0 convention.
    pub degenerate: Vec<String>,
}

pub fn compute_report(eval: &EvalSet, k: usize) -> Result<MetricsReport> {
    let (threshold, best_f1) = best_f1_threshold(&eval.scores, &eval.labels)?;
    let cm = confusion_at(&eval.scores, &eval.labels, threshold)?;
    let mut degenerate = Vec::new();
    let mut track = |name: &str, r: Rate| -> f64 {
        if r.degenerate {
            degenerate.push(name.to_string());
        }
        r.value
    };
    let report = MetricsReport {
        task: Task::Full,
        threshold,
        auc_roc: roc_auc(&eval.scores, &eval.labels)?,
        f1: best_f1,
        precision_at_k: mean_precision_at_k(eval, k)?,
        k,
        precision: track("precision", precision(&cm)),
        recall: track("recall", recall(&cm)),
        mcc: track("mcc", mcc(&cm)),
        auc_pr: pr_auc(&eval.scores, &eval.labels)?,
        accuracy: track("accuracy", accuracy(&cm)),
        npv: track("npv", npv(&cm)),
        confusion: cm,
        evaluated_cells: eval.len(),
        degenerate,
    };
    Ok(report)
}
