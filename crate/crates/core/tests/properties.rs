use nalgebra::DMatrix;
use proptest::prelude::*;

use sparsecast::copula::project_correlation;
use sparsecast::dataset::{apply_mask, read_csv, ObservationMatrix};
use sparsecast::ensemble::{aggregate, cumulative_error, update_weights};
use sparsecast::evaluation::{friedman_rank, mape, wilcoxon_signed_rank};

fn panel(rows: usize, cols: usize, values: &[f64]) -> ObservationMatrix {
    let m = DMatrix::from_row_slice(rows, cols, &values[..rows * cols]);
    ObservationMatrix::from_dense(&m, (0..cols).map(|j| format!("c{j}")).collect()).unwrap()
}

fn dims_and_values() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..12, 1usize..5).prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(-1e6..1e6f64, r * c)))
}

fn brute_p(d: &[f64]) -> f64 {
    let d: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return 1.0;
    }
    let mag: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let rank2: Vec<i64> = mag
        .iter()
        .map(|m| 2 * mag.iter().filter(|o| *o < m).count() as i64 + mag.iter().filter(|o| *o == m).count() as i64 + 1)
        .collect();
    let total: i64 = rank2.iter().sum();
    let plus: i64 = d.iter().zip(&rank2).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let w = plus.min(total - plus);
    let hits = (0u64..1 << n)
        .filter(|s| (0..n).filter(|k| s >> k & 1 == 1).map(|k| rank2[k]).sum::<i64>() <= w)
        .count();
    (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0)
}

proptest! {
    #[test]
    fn masking_is_deterministic_and_sized((r, c, v) in dims_and_values(), fraction in 0.0..=1.0f64, seed: u64) {
        let m = panel(r, c, &v);
        let (a, ra) = apply_mask(&m, fraction, seed).unwrap();
        let (b, rb) = apply_mask(&m, fraction, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&ra.erased_cells, &rb.erased_cells);
        let expected = (fraction * (r * c) as f64).round() as usize;
        prop_assert_eq!(ra.erased_cells.len(), expected);
        prop_assert_eq!(a.observed_count(), r * c - expected);
    }

    #[test]
    fn csv_round_trip((r, c, v) in dims_and_values(), fraction in 0.0..0.9f64, seed: u64) {
        let (m, _) = apply_mask(&panel(r, c, &v), fraction, seed).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &m.schema()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn projection_is_idempotent(q in 2usize..6, entries in prop::collection::vec(-1.0..1.0f64, 36)) {
        let a = DMatrix::from_fn(q, q, |i, j| entries[i * 6 + j]);
        let s = &a * a.transpose() + DMatrix::identity(q, q) * 0.05;
        let p = project_correlation(&s).unwrap();
        for i in 0..q {
            prop_assert!((p[(i, i)] - 1.0).abs() < 1e-12);
        }
        prop_assert!((&p - p.transpose()).norm() < 1e-12);
        let pp = project_correlation(&p).unwrap();
        prop_assert!((&pp - &p).norm() < 1e-10);
        prop_assert!(p.clone().symmetric_eigenvalues().min() > -1e-10);
    }

    #[test]
    fn weights_lie_on_the_simplex(
        ce in prop::collection::vec(0.0..1e4f64, 1..10),
        lam in 0.01..5.0f64,
    ) {
        let w = update_weights(&ce, &vec![lam; ce.len()]).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|x| *x >= 0.0 && x.is_finite()));
    }

    #[test]
    fn weights_ignore_a_common_shift(
        ce in prop::collection::vec(0.0..100.0f64, 2..8),
        shift in 0.0..1e3f64,
        lam in 0.05..2.0f64,
    ) {
        let l = vec![lam; ce.len()];
        let shifted: Vec<f64> = ce.iter().map(|c| c + shift).collect();
        let a = update_weights(&ce, &l).unwrap();
        let b = update_weights(&shifted, &l).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn aggregate_stays_within_member_range(
        pairs in prop::collection::vec((-1e5..1e5f64, 0.0..1.0f64), 1..8),
    ) {
        let preds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let raw: Vec<f64> = pairs.iter().map(|p| p.1 + 1e-6).collect();
        let z: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / z).collect();
        let y = aggregate(&preds, &w).unwrap();
        let lo = preds.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = preds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= y && y <= hi);
    }

    #[test]
    fn cumulative_error_is_a_prefix_sum(errs in prop::collection::vec(0.0..10.0f64, 1..20), r in 0usize..25) {
        if (1..=errs.len()).contains(&r) {
            let want: f64 = errs[..r].iter().sum();
            prop_assert!((cumulative_error(&errs, r).unwrap() - want).abs() <= 1e-9);
        } else {
            prop_assert!(cumulative_error(&errs, r).is_err());
        }
    }

    #[test]
    fn wilcoxon_matches_enumeration(
        pairs in prop::collection::vec((0i32..6, 0i32..6), 1..=10),
        scale in 0.1..10.0f64,
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64 * scale).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64 * scale).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let got = wilcoxon_signed_rank(&a, &b).unwrap();
        prop_assert!((got.p_value - brute_p(&d)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&got.p_value));
    }

    #[test]
    fn mape_is_scale_invariant(
        pairs in prop::collection::vec((1.0..1e3f64, -1e3..1e3f64), 1..20),
        scale in 1e-3..1e3f64,
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let f: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let sa: Vec<f64> = a.iter().map(|x| x * scale).collect();
        let sf: Vec<f64> = f.iter().map(|x| x * scale).collect();
        let m = mape(&a, &f).unwrap();
        prop_assert!((m - mape(&sa, &sf).unwrap()).abs() <= 1e-9 * m.max(1.0));
        prop_assert!(m >= 0.0);
    }

    #[test]
    fn friedman_ranks_sum_to_the_triangle_number(
        (periods, models, cells) in (1usize..15, 2usize..7)
            .prop_flat_map(|(p, m)| (Just(p), Just(m), prop::collection::vec(0u8..10, p * m))),
    ) {
        let grid: Vec<Vec<f64>> = (0..periods)
            .map(|t| (0..models).map(|k| cells[t * models + k] as f64).collect())
            .collect();
        let ranks = friedman_rank(&grid).unwrap();
        let total: f64 = ranks.iter().sum();
        let m = models as f64;
        prop_assert!((total - m * (m + 1.0) / 2.0).abs() <= 1e-9);
        prop_assert!(ranks.iter().all(|r| (1.0..=m).contains(r)));
    }
}
