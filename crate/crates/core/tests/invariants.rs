//! Property tests for the algebraic invariants of the trade layer.

use proptest::prelude::*;
use tradecast_core::grid::Grid;
use tradecast_core::trade::{
    activation_candidates, binarize, compute_rca, transition_probabilities, ExportPanel,
};

/// Arbitrary small panels: 2-8 countries, 2-10 products, 1-4 years, with
/// a sprinkle of structural zeros.
fn arb_panel() -> impl Strategy<Value = ExportPanel> {
    (2usize..=8, 2usize..=10, 1usize..=4)
        .prop_flat_map(|(n_c, n_p, n_y)| {
            let cells = proptest::collection::vec(
                prop_oneof![3 => (0.01f64..1e6), 1 => Just(0.0)],
                n_c * n_p * n_y,
            );
            (Just((n_c, n_p, n_y)), cells)
        })
        .prop_map(|((n_c, n_p, n_y), cells)| {
            let years: Vec<i32> = (0..n_y as i32).map(|y| 2000 + y).collect();
            let values: Vec<Grid<f64>> = (0..n_y)
                .map(|y| {
                    Grid::from_fn(n_c, n_p, |c, p| cells[y * n_c * n_p + c * n_p + p])
                })
                .collect();
            ExportPanel::new(
                years,
                (0..n_c).map(|c| format!("C{c:02}")).collect(),
                (0..n_p).map(|p| format!("p{p:02}")).collect(),
                values,
            )
            .unwrap()
        })
}

proptest! {
    #[test]
    fn rca_weighted_mean_is_one(panel in arb_panel()) {
        let year = panel.first_year();
        let grid = panel.year_values(year).unwrap();
        let world: f64 = grid.values().iter().sum();
        prop_assume!(world > 0.0);
        let rca = compute_rca(&panel, year).unwrap();
        for p in 0..grid.cols() {
            let product_total: f64 = (0..grid.rows()).map(|c| grid.at(c, p)).sum();
            if product_total == 0.0 {
                continue;
            }
            let weighted: f64 = (0..grid.rows())
                .map(|c| (grid.row(c).iter().sum::<f64>() / world) * rca.values.at(c, p))
                .sum();
            prop_assert!((weighted - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rca_scale_invariance(panel in arb_panel(), factor in 0.001f64..1000.0) {
        let year = panel.first_year();
        let grid = panel.year_values(year).unwrap();
        prop_assume!(grid.values().iter().sum::<f64>() > 0.0);
        let scaled_values: Vec<Grid<f64>> = panel
            .years()
            .iter()
            .map(|&y| {
                let g = panel.year_values(y).unwrap();
                Grid::from_fn(g.rows(), g.cols(), |c, p| g.at(c, p) * factor)
            })
            .collect();
        let scaled = ExportPanel::new(
            panel.years().to_vec(),
            panel.countries().to_vec(),
            panel.products().to_vec(),
            scaled_values,
        )
        .unwrap();
        let a = compute_rca(&panel, year).unwrap();
        let b = compute_rca(&scaled, year).unwrap();
        for (x, y) in a.values.values().iter().zip(b.values.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn binarize_monotone_in_threshold(panel in arb_panel(), t1 in 0.1f64..2.0, t2 in 0.1f64..2.0) {
        let year = panel.first_year();
        prop_assume!(panel.year_values(year).unwrap().values().iter().sum::<f64>() > 0.0);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let rca = compute_rca(&panel, year).unwrap();
        let m_lo = binarize(&rca, lo).unwrap();
        let m_hi = binarize(&rca, hi).unwrap();
        for (a, b) in m_lo.values.values().iter().zip(m_hi.values.values()) {
            prop_assert!(b <= a, "raising the threshold turned a 0 into a 1");
        }
    }

    #[test]
    fn activation_masks_nest(panel in arb_panel(), t1 in 0.05f64..0.5, t2 in 0.05f64..0.5) {
        for y in panel.years() {
            prop_assume!(panel.year_values(*y).unwrap().values().iter().sum::<f64>() > 0.0);
        }
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let window = (panel.first_year(), panel.last_year());
        let tight = activation_candidates(&panel, window, lo).unwrap();
        let loose = activation_candidates(&panel, window, hi).unwrap();
        for (a, b) in tight.values.values().iter().zip(loose.values.values()) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn transition_rows_are_stochastic(panel in arb_panel()) {
        prop_assume!(panel.years().len() >= 2);
        for y in panel.years() {
            prop_assume!(panel.year_values(*y).unwrap().values().iter().sum::<f64>() > 0.0);
        }
        let first = panel.first_year();
        let m0 = binarize(&compute_rca(&panel, first).unwrap(), 1.0).unwrap();
        let m1 = binarize(&compute_rca(&panel, first + 1).unwrap(), 1.0).unwrap();
        let t = transition_probabilities(&m0, &m1).unwrap();
        for row in t.rows.iter().flatten() {
            prop_assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregation_conserves_country_totals(panel in arb_panel(), digits in 1usize..=2) {
        let agg = panel.aggregate_products(digits).unwrap();
        for &year in panel.years() {
            let before = panel.year_values(year).unwrap();
            let after = agg.year_values(year).unwrap();
            for c in 0..before.rows() {
                let a: f64 = before.row(c).iter().sum();
                let b: f64 = after.row(c).iter().sum();
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }
}
