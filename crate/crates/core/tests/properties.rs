use bdarma_core::ingest::{split, to_shares, SectorPanel};
use bdarma_core::metrics::{forecast_rmse, recovery_metrics, Interval, ParameterLabel};
use bdarma_core::model::FourierDesign;
use bdarma_core::simplex::{alr, alr_inv, Composition};
use proptest::prelude::*;

fn composition(j: usize) -> impl Strategy<Value = Composition> {
    prop::collection::vec(1e-6f64..1.0, j).prop_map(|w| Composition::from_weights(w).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn alr_round_trip(y in (2usize..12).prop_flat_map(composition)) {
        let back = alr_inv(&alr(&y));
        for (a, b) in y.as_slice().iter().zip(back.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shares_ignore_daily_scale(
        rows in prop::collection::vec(prop::collection::vec(0.1f64..1e6, 4), 1..20),
        scales in prop::collection::vec(1e-3f64..1e3, 20),
    ) {
        let n = rows.len();
        let names: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let sectors: Vec<String> = (0..4).map(|s| format!("s{s}")).collect();
        let scaled: Vec<Vec<f64>> = rows.iter().zip(&scales).map(|(r, c)| r.iter().map(|v| v * c).collect()).collect();
        let a = to_shares(&SectorPanel::new(names.clone(), sectors.clone(), rows).unwrap()).unwrap();
        let b = to_shares(&SectorPanel::new(names, sectors, scaled).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (u, v) in x.as_slice().iter().zip(y.as_slice()) {
                prop_assert!((u - v).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn resplitting_the_training_part_is_consistent(len in 2usize..60, test in 1usize..20) {
        prop_assume!(test < len);
        let series: Vec<usize> = (0..len).collect();
        let (train, holdout) = split(&series, test).unwrap();
        prop_assert_eq!(holdout.len(), test);
        prop_assert_eq!([train.as_slice(), holdout.as_slice()].concat(), series.clone());
        let (train2, holdout2) = split(&series, test).unwrap();
        prop_assert_eq!((train, holdout), (train2, holdout2));
    }

    #[test]
    fn rmse_decomposes_into_bias_and_variance(
        truth in -2.0f64..2.0,
        estimates in prop::collection::vec(-3.0f64..3.0, 2..40),
    ) {
        let labels = [ParameterLabel { name: "x".into(), block: "A1".into() }];
        let est: Vec<Vec<f64>> = estimates.iter().map(|e| vec![*e]).collect();
        let iv: Vec<Vec<Interval>> = estimates.iter().map(|e| vec![Interval { lo: e - 1.0, hi: e + 1.0 }]).collect();
        let summary = recovery_metrics(&labels, &[truth], &est, &iv).unwrap();
        let p = &summary.parameters[0];
        let n = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / n;
        let variance = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        prop_assert!((p.rmse.powi(2) - p.bias.powi(2) - variance).abs() < 1e-12);
    }

    #[test]
    fn pooled_rmse_ignores_replicate_order(
        pairs in prop::collection::vec(prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3), 1..10),
        seed in any::<u64>(),
    ) {
        let actual: Vec<Vec<f64>> = pairs.iter().map(|r| r.iter().map(|p| p.0).collect()).collect();
        let fc: Vec<Vec<f64>> = pairs.iter().map(|r| r.iter().map(|p| p.1).collect()).collect();
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.sort_by_key(|i| (*i as u64).wrapping_mul(seed | 1).rotate_left(17));
        let actual2: Vec<&Vec<f64>> = order.iter().map(|i| &actual[*i]).collect();
        let fc2: Vec<&Vec<f64>> = order.iter().map(|i| &fc[*i]).collect();
        let a = forecast_rmse(&actual, &fc).unwrap();
        let b = forecast_rmse(&actual2, &fc2).unwrap();
        prop_assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn fourier_columns_average_out_over_full_periods(
        weekly in 0usize..3,
        annual in 0usize..6,
        origin in 0usize..2000,
        periods in 1usize..3,
    ) {
        let design = FourierDesign { weekly_pairs: weekly, annual_pairs: annual, origin, ..FourierDesign::trading_days(3) };
        let window = if annual == 0 { 5 * periods } else { 1260 * periods };
        let mut sums = vec![0.0; design.block_width()];
        let mut row = vec![0.0; design.block_width()];
        for d in origin..origin + window {
            design.features(d, &mut row);
            for (s, v) in sums.iter_mut().zip(&row) {
                *s += v;
            }
        }
        prop_assert!((sums[0] / window as f64 - 1.0).abs() < 1e-15);
        for s in &sums[1..] {
            prop_assert!((s / window as f64).abs() < 1e-12, "{}", s / window as f64);
        }
    }
}

#[test]
fn fourier_phase_at_day_zero_and_full_week() {
    let design = FourierDesign::trading_days(2);
    let mut row = vec![0.0; design.block_width()];
    design.features(0, &mut row);
    assert_eq!(row.len(), 15);
    for pair in row[1..].chunks(2) {
        assert_eq!(pair, [0.0, 1.0]);
    }
    design.features(5, &mut row);
    assert!(row[1].abs() < 1e-15 && (row[2] - 1.0).abs() < 1e-15);
}
