use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::trade::{labeled_matrix_csv, same_axes, Axes, ExportPanel};

/// Continuous Balassa comparative-advantage values for one year.
#[derive(Debug, Clone)]
pub struct RcaMatrix {
    pub year: i32,
    pub values: Grid<f64>,
    pub axes: Arc<Axes>,
}

/// Binary competitiveness matrix for one year.
#[derive(Debug, Clone)]
pub struct PresenceMatrix {
    pub year: i32,
    pub values: Grid<u8>,
    pub axes: Arc<Axes>,
}

/// Cells whose comparative advantage stayed below a non-significance
/// threshold for every year of the window, i.e. the candidates for a
/// genuinely new export.
#[derive(Debug, Clone)]
pub struct ActivationMask {
    pub values: Grid<u8>,
    pub window: (i32, i32),
    pub inactivity_threshold: f64,
    pub axes: Arc<Axes>,
}

impl RcaMatrix {
    pub fn to_csv_string(&self) -> String {
        labeled_matrix_csv(&self.axes, &self.values)
    }
}

impl PresenceMatrix {
    pub fn to_csv_string(&self) -> String {
        labeled_matrix_csv(&self.axes, &self.values)
    }

    /// Fraction of ones over total cells.
    pub fn density(&self) -> Result<f64> {
        density(self)
    }
}

impl ActivationMask {
    pub fn count_ones(&self) -> usize {
        self.values.values().iter().filter(|&&v| v == 1).count()
    }
}

/// Per-country export share of a product relative to the world share,
/// zero whenever either marginal vanishes.
///
/// `R[c][p] = (V[c][p] / sum_p' V[c][p']) / (sum_c' V[c'][p] / sum_c'p' V[c'][p'])`
pub fn compute_rca(panel: &ExportPanel, year: i32) -> Result<RcaMatrix> {
    let grid = panel.year_values(year)?;
    let n_c = grid.rows();
    let n_p = grid.cols();
    let mut country_total = vec![0.0; n_c];
    let mut product_total = vec![0.0; n_p];
    let mut world_total = 0.0;
    for c in 0..n_c {
        for p in 0..n_p {
            let v = grid.at(c, p);
            country_total[c] += v;
            product_total[p] += v;
            world_total += v;
        }
    }
    if world_total == 0.0 {
        return Err(Error::validation(format!(
            "panel year {year} has no exports"
        )));
    }
    let mut values = Grid::filled(n_c, n_p, 0.0);
    for c in 0..n_c {
        if country_total[c] == 0.0 {
            continue;
        }
        for p in 0..n_p {
            if product_total[p] == 0.0 {
                continue;
            }
            let share = grid.at(c, p) / country_total[c];
            let world_share = product_total[p] / world_total;
            values.set(c, p, share / world_share);
        }
    }
    Ok(RcaMatrix {
        year,
        values,
        axes: Arc::clone(panel.axes()),
    })
}

/// Thresholds an RCA matrix into the binary competitiveness matrix;
/// the boundary value itself counts as competitive.
pub fn binarize(rca: &RcaMatrix, threshold: f64) -> Result<PresenceMatrix> {
    if !(threshold > 0.0) {
        return Err(Error::validation(format!(
            "binarization threshold must be positive, got {threshold}"
        )));
    }
    let values = Grid::from_fn(rca.values.rows(), rca.values.cols(), |c, p| {
        u8::from(rca.values.at(c, p) >= threshold)
    });
    Ok(PresenceMatrix {
        year: rca.year,
        values,
        axes: Arc::clone(&rca.axes),
    })
}

/// Marks the (country, product) pairs whose RCA stayed strictly below
/// `inactivity_threshold` in every year of `window` (inclusive).
pub fn activation_candidates(
    panel: &ExportPanel,
    window: (i32, i32),
    inactivity_threshold: f64,
) -> Result<ActivationMask> {
    let (first, last) = window;
    if first > last {
        return Err(Error::validation(format!(
            "empty activation window {first}..={last}"
        )));
    }
    panel.year_index(first)?;
    panel.year_index(last)?;
    let axes = Arc::clone(panel.axes());
    let mut mask = Grid::filled(axes.n_countries(), axes.n_products(), 1u8);
    for year in first..=last {
        let rca = compute_rca(panel, year)?;
        for c in 0..mask.rows() {
            for p in 0..mask.cols() {
                if rca.values.at(c, p) >= inactivity_threshold {
                    mask.set(c, p, 0);
                }
            }
        }
    }
    Ok(ActivationMask {
        values: mask,
        window,
        inactivity_threshold,
        axes,
    })
}

/// Empirical transition probabilities between the binary states of two
/// presence matrices. `rows[a]` holds `[P(a->0), P(a->1)]`, `None` when
/// no cell had state `a` in the start matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub rows: [Option<[f64; 2]>; 2],
    pub counts: [[usize; 2]; 2],
}

pub fn transition_probabilities(
    m_start: &PresenceMatrix,
    m_end: &PresenceMatrix,
) -> Result<TransitionMatrix> {
    if !same_axes(&m_start.axes, &m_end.axes) {
        return Err(Error::validation(
            "presence matrices have different axes".to_string(),
        ));
    }
    let mut counts = [[0usize; 2]; 2];
    for (a, b) in m_start
        .values
        .values()
        .iter()
        .zip(m_end.values.values().iter())
    {
        counts[*a as usize][*b as usize] += 1;
    }
    let rows = [0, 1].map(|a| {
        let support = counts[a][0] + counts[a][1];
        if support == 0 {
            None
        } else {
            Some([
                counts[a][0] as f64 / support as f64,
                counts[a][1] as f64 / support as f64,
            ])
        }
    });
    Ok(TransitionMatrix { rows, counts })
}

/// Fraction of nonzero cells.
pub fn density(m: &PresenceMatrix) -> Result<f64> {
    if m.values.is_empty() {
        return Err(Error::validation("empty presence matrix"));
    }
    let ones = m.values.values().iter().filter(|&&v| v == 1).count();
    Ok(ones as f64 / m.values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn panel_2x2() -> ExportPanel {
        // V = [[10, 0], [10, 10]]
        ExportPanel::new(
            vec![2000],
            vec!["A".into(), "B".into()],
            vec!["p1".into(), "p2".into()],
            vec![Grid::from_vec(2, 2, vec![10.0, 0.0, 10.0, 10.0])],
        )
        .unwrap()
    }

    fn random_panel(seed_value: u64, n_years: usize, n_c: usize, n_p: usize) -> ExportPanel {
        let mut rng = seed::rng(seed_value);
        let years: Vec<i32> = (0..n_years as i32).map(|y| 2000 + y).collect();
        let values = (0..n_years)
            .map(|_| {
                Grid::from_fn(n_c, n_p, |_, _| {
                    if rng.gen_bool(0.3) {
                        0.0
                    } else {
                        rng.gen_range(0.0..100.0)
                    }
                })
            })
            .collect();
        ExportPanel::new(
            years,
            (0..n_c).map(|c| format!("C{c:02}")).collect(),
            (0..n_p).map(|p| format!("p{p:02}")).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn uniform_panel_gives_unit_rca() {
        let panel = ExportPanel::new(
            vec![2000],
            vec!["A".into(), "B".into()],
            vec!["p1".into(), "p2".into()],
            vec![Grid::filled(2, 2, 7.0)],
        )
        .unwrap();
        let rca = compute_rca(&panel, 2000).unwrap();
        for &v in rca.values.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_computed_rca() {
        let rca = compute_rca(&panel_2x2(), 2000).unwrap();
        assert!((rca.values.at(0, 0) - 1.5).abs() < 1e-12);
        assert_eq!(rca.values.at(0, 1), 0.0);
        assert!((rca.values.at(1, 0) - 0.75).abs() < 1e-12);
        assert!((rca.values.at(1, 1) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_country_row_stays_zero() {
        let panel = ExportPanel::new(
            vec![2000],
            vec!["A".into(), "B".into()],
            vec!["p1".into(), "p2".into()],
            vec![Grid::from_vec(2, 2, vec![0.0, 0.0, 3.0, 4.0])],
        )
        .unwrap();
        let rca = compute_rca(&panel, 2000).unwrap();
        assert_eq!(rca.values.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn missing_year_is_lookup_error() {
        let err = compute_rca(&panel_2x2(), 1999).unwrap_err();
        assert!(matches!(err, Error::Lookup(_)), "{err}");
    }

    #[test]
    fn all_zero_year_is_rejected() {
        let panel = ExportPanel::new(
            vec![2000],
            vec!["A".into()],
            vec!["p1".into()],
            vec![Grid::filled(1, 1, 0.0)],
        )
        .unwrap();
        assert!(compute_rca(&panel, 2000).is_err());
    }

    #[test]
    fn binarize_includes_boundary() {
        let panel = panel_2x2();
        let mut rca = compute_rca(&panel, 2000).unwrap();
        rca.values.set(0, 0, 1.0);
        rca.values.set(0, 1, 0.999);
        let m = binarize(&rca, 1.0).unwrap();
        assert_eq!(m.values.at(0, 0), 1);
        assert_eq!(m.values.at(0, 1), 0);
    }

    #[test]
    fn binarize_hand_example() {
        let rca = compute_rca(&panel_2x2(), 2000).unwrap();
        let m = binarize(&rca, 1.0).unwrap();
        assert_eq!(m.values.values(), &[1, 0, 0, 1]);
    }

    #[test]
    fn binarize_is_monotone_in_threshold() {
        let panel = random_panel(5, 1, 6, 9);
        let rca = compute_rca(&panel, 2000).unwrap();
        let low = binarize(&rca, 0.5).unwrap();
        let high = binarize(&rca, 1.5).unwrap();
        for (l, h) in low.values.values().iter().zip(high.values.values()) {
            assert!(h <= l);
        }
    }

    #[test]
    fn rca_weighted_mean_identity() {
        // For every product with nonzero world export the country-share
        // weighted average of RCA is exactly one.
        for s in 0..20 {
            let panel = random_panel(s, 1, 8, 12);
            let grid = panel.year_values(2000).unwrap();
            let rca = compute_rca(&panel, 2000).unwrap();
            let world: f64 = grid.values().iter().sum();
            for p in 0..grid.cols() {
                let product_total: f64 = (0..grid.rows()).map(|c| grid.at(c, p)).sum();
                if product_total == 0.0 {
                    continue;
                }
                let weighted: f64 = (0..grid.rows())
                    .map(|c| {
                        let country_total: f64 = grid.row(c).iter().sum();
                        (country_total / world) * rca.values.at(c, p)
                    })
                    .sum();
                assert!((weighted - 1.0).abs() < 1e-9, "product {p}: {weighted}");
            }
        }
    }

    #[test]
    fn rca_is_scale_invariant() {
        let panel = random_panel(9, 1, 6, 10);
        let grid = panel.year_values(2000).unwrap();
        let scaled = ExportPanel::new(
            vec![2000],
            panel.countries().to_vec(),
            panel.products().to_vec(),
            vec![Grid::from_fn(grid.rows(), grid.cols(), |c, p| {
                grid.at(c, p) * 1234.5
            })],
        )
        .unwrap();
        let a = compute_rca(&panel, 2000).unwrap();
        let b = compute_rca(&scaled, 2000).unwrap();
        for (x, y) in a.values.values().iter().zip(b.values.values()) {
            let tol = 1e-12 * x.abs().max(1.0);
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn activation_history_below_threshold() {
        // RCA history of the (A,p2) cell stays under 0.25.
        let mut grids = Vec::new();
        for v in [0.0, 1.0, 2.0] {
            grids.push(Grid::from_vec(2, 2, vec![100.0, v, 100.0, 100.0]));
        }
        let panel = ExportPanel::new(
            vec![2000, 2001, 2002],
            vec!["A".into(), "B".into()],
            vec!["p1".into(), "p2".into()],
            grids,
        )
        .unwrap();
        let mask = activation_candidates(&panel, (2000, 2002), 0.25).unwrap();
        assert_eq!(mask.values.at(0, 1), 1);
        // A cell that is competitive somewhere in the window is excluded.
        assert_eq!(mask.values.at(0, 0), 0);
    }

    #[test]
    fn activation_excluded_when_one_year_exceeds() {
        let grids = vec![
            Grid::from_vec(1, 2, vec![100.0, 0.0]),
            Grid::from_vec(1, 2, vec![100.0, 60.0]),
            Grid::from_vec(1, 2, vec![100.0, 0.0]),
        ];
        let panel = ExportPanel::new(
            vec![2000, 2001, 2002],
            vec!["A".into()],
            vec!["p1".into(), "p2".into()],
            grids,
        )
        .unwrap();
        // With one country RCA is 1 for any exported product, so p2 has
        // history [0, 1, 0]: above 0.25 in 2001.
        let mask = activation_candidates(&panel, (2000, 2002), 0.25).unwrap();
        assert_eq!(mask.values.at(0, 1), 0);
    }

    #[test]
    fn activation_matches_per_cell_scan() {
        for s in 0..10 {
            let panel = random_panel(100 + s, 3, 3, 3);
            let mask = activation_candidates(&panel, (2000, 2002), 0.25).unwrap();
            let rcas: Vec<_> = (2000..=2002)
                .map(|y| compute_rca(&panel, y).unwrap())
                .collect();
            for c in 0..3 {
                for p in 0..3 {
                    let expect = rcas.iter().all(|r| r.values.at(c, p) < 0.25);
                    assert_eq!(mask.values.at(c, p) == 1, expect, "seed {s} cell {c},{p}");
                }
            }
        }
    }

    #[test]
    fn activation_masks_nest_by_threshold() {
        let panel = random_panel(77, 3, 5, 7);
        let tight = activation_candidates(&panel, (2000, 2002), 0.1).unwrap();
        let loose = activation_candidates(&panel, (2000, 2002), 0.3).unwrap();
        for (t, l) in tight.values.values().iter().zip(loose.values.values()) {
            assert!(t <= l, "mask(0.1) must be a subset of mask(0.3)");
        }
    }

    #[test]
    fn empty_window_is_rejected() {
        let err = activation_candidates(&panel_2x2(), (2001, 2000), 0.25).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn identity_transitions() {
        let rca = compute_rca(&panel_2x2(), 2000).unwrap();
        let m = binarize(&rca, 1.0).unwrap();
        let t = transition_probabilities(&m, &m).unwrap();
        assert_eq!(t.rows[0].unwrap(), [1.0, 0.0]);
        assert_eq!(t.rows[1].unwrap(), [0.0, 1.0]);
    }

    #[test]
    fn hand_counted_transitions() {
        let axes = Arc::new(Axes {
            countries: vec!["A".into(), "B".into()],
            products: vec!["p1".into(), "p2".into()],
        });
        let start = PresenceMatrix {
            year: 2000,
            values: Grid::from_vec(2, 2, vec![1, 0, 0, 0]),
            axes: Arc::clone(&axes),
        };
        let end = PresenceMatrix {
            year: 2001,
            values: Grid::from_vec(2, 2, vec![1, 1, 0, 0]),
            axes,
        };
        let t = transition_probabilities(&start, &end).unwrap();
        let from0 = t.rows[0].unwrap();
        assert!((from0[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((from0[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(t.rows[1].unwrap(), [0.0, 1.0]);
    }

    #[test]
    fn transition_rows_sum_to_one() {
        for s in 0..10 {
            let panel = random_panel(200 + s, 2, 6, 8);
            let m0 = binarize(&compute_rca(&panel, 2000).unwrap(), 1.0).unwrap();
            let m1 = binarize(&compute_rca(&panel, 2001).unwrap(), 1.0).unwrap();
            let t = transition_probabilities(&m0, &m1).unwrap();
            for row in t.rows.iter().flatten() {
                assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transition_axis_mismatch() {
        let a = binarize(&compute_rca(&panel_2x2(), 2000).unwrap(), 1.0).unwrap();
        let other = random_panel(3, 1, 2, 3);
        let b = binarize(&compute_rca(&other, 2000).unwrap(), 1.0).unwrap();
        assert!(transition_probabilities(&a, &b).is_err());
    }

    #[test]
    fn density_counts_ones() {
        let axes = Arc::new(Axes {
            countries: vec!["A".into(), "B".into()],
            products: vec!["p1".into(), "p2".into()],
        });
        let zeros = PresenceMatrix {
            year: 2000,
            values: Grid::filled(2, 2, 0),
            axes: Arc::clone(&axes),
        };
        assert_eq!(density(&zeros).unwrap(), 0.0);
        let diag = PresenceMatrix {
            year: 2000,
            values: Grid::from_vec(2, 2, vec![1, 0, 0, 1]),
            axes: Arc::clone(&axes),
        };
        assert_eq!(density(&diag).unwrap(), 0.5);
        let empty = PresenceMatrix {
            year: 2000,
            values: Grid::from_vec(0, 0, vec![]),
            axes,
        };
        assert!(density(&empty).is_err());
    }

    #[test]
    fn aggregate_conserves_country_totals() {
        let panel = random_panel(55, 2, 4, 9);
        let agg = panel.aggregate_products(1).unwrap();
        for year in [2000, 2001] {
            let before = panel.year_values(year).unwrap();
            let after = agg.year_values(year).unwrap();
            for c in 0..4 {
                let a: f64 = before.row(c).iter().sum();
                let b: f64 = after.row(c).iter().sum();
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn matrix_csv_has_labels() {
        let rca = compute_rca(&panel_2x2(), 2000).unwrap();
        let csv = rca.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "country,p1,p2");
        assert!(lines.next().unwrap().starts_with("A,"));
    }
}
