mod common;

use common::*;
use latticewalk::counting::{bunching_detection_probability, sample_many};
use latticewalk::*;

fn exact() -> CorrelationMatrix {
    quantum_correlation(&synthetic_lattice(), &corner_pair()).unwrap()
}

#[test]
fn counts_are_unbiased_within_five_sigma() {
    let g = exact();
    let n = 1_000_000u64;
    let rec = sample_counts(&g, n, &LossVector::lossless(9), 0.5, 31).unwrap();
    let keep = bunching_detection_probability(0.5);
    for (i, j, p) in g.upper_entries() {
        let q = if i == j { p * keep } else { p };
        let mean = n as f64 * q;
        let sd = (n as f64 * q * (1.0 - q)).sqrt().max(1.0);
        let z = (rec.count(i, j) as f64 - mean) / sd;
        assert!(z.abs() < 5.0, "cell ({i},{j}) off by {z} sigma");
    }
}

#[test]
fn half_of_bunched_pairs_are_seen_with_a_balanced_split() {
    let g = exact();
    let n = 1_000_000u64;
    let rec = sample_counts(&g, n, &LossVector::lossless(9), 0.5, 32).unwrap();
    let bunched_p: f64 = (0..9).map(|k| g.get(k, k)).sum();
    let seen: u64 = (0..9).map(|k| rec.count(k, k)).sum();
    let frac = seen as f64 / (n as f64 * bunched_p);
    assert!((frac - 0.5).abs() < 0.01, "{frac}");
}

#[test]
fn agrees_with_event_by_event_sampler() {
    let g = exact();
    let eta = [0.9, 0.5, 0.8, 0.7, 0.6, 0.95, 0.4, 0.85, 0.75];
    let n = 400_000u64;
    let oracle = event_sampler(&g, n, &eta, 0.3, 33);
    let rec = sample_counts(&g, n, &LossVector::new(eta.to_vec()).unwrap(), 0.3, 34).unwrap();
    for (i, j, _) in g.upper_entries() {
        let (a, b) = (oracle[(i, j)], rec.count(i, j) as f64);
        let sd = (a + b).sqrt().max(1.0);
        assert!((a - b).abs() / sd < 5.0, "cell ({i},{j}): {a} vs {b}");
    }
}

#[test]
fn estimator_converges_with_counts() {
    let g = exact();
    let mut last = f64::INFINITY;
    for n in [1_000u64, 100_000, 10_000_000] {
        let rec = sample_counts(&g, n, &LossVector::lossless(9), 0.5, 35).unwrap();
        let est = estimate_correlation(&rec, true, None).unwrap();
        let err = max_abs_diff_real(est.gamma.matrix(), g.matrix());
        assert!(err < last);
        last = err;
    }
    assert!(last < 1e-3);
}

#[test]
fn uniform_loss_leaves_post_selected_estimate_unbiased() {
    let g = exact();
    let seeds = latticewalk::exec::derive_seeds(36, 30);
    let recs =
        sample_many(&g, 200_000, &LossVector::uniform(9, 0.3).unwrap(), 0.5, &seeds, Execution::default())
            .unwrap();
    let mut mean = latticewalk::nalgebra::DMatrix::<f64>::zeros(9, 9);
    for r in &recs {
        mean += estimate_correlation(r, true, None).unwrap().gamma.matrix();
    }
    mean /= recs.len() as f64;
    assert!(max_abs_diff_real(&mean, g.matrix()) < 2e-3);
}

#[test]
fn loss_correction_recovers_nonuniform_loss() {
    let g = exact();
    let eta = LossVector::new(vec![0.9, 0.3, 0.9, 0.3, 0.9, 0.3, 0.9, 0.3, 0.9]).unwrap();
    let rec = sample_counts(&g, 2_000_000, &eta, 0.5, 37).unwrap();
    let raw = estimate_correlation(&rec, true, None).unwrap();
    let fixed = estimate_correlation(&rec, true, Some(&eta)).unwrap();
    let e_raw = max_abs_diff_real(raw.gamma.matrix(), g.matrix());
    let e_fixed = max_abs_diff_real(fixed.gamma.matrix(), g.matrix());
    assert!(e_fixed < 1e-3 && e_raw > 10.0 * e_fixed, "{e_raw} {e_fixed}");
}

#[test]
fn significance_is_calibrated_under_the_null() {
    // A classical (distinguishable) source never violates; a > 3 sigma
    // excursion at the most violating cell should be rare.
    let u = synthetic_lattice();
    let g = classical_correlation(&u, &corner_pair()).unwrap();
    let seeds = latticewalk::exec::derive_seeds(38, 1000);
    let recs = sample_many(&g, 100_000, &LossVector::lossless(9), 0.5, &seeds, Execution::default()).unwrap();
    let false_alarms = recs
        .iter()
        .filter(|r| {
            let est = estimate_correlation(r, true, None).unwrap();
            let v = violation_significance(&est.gamma, &est.sigma).unwrap();
            v.max_significance().unwrap().2 > 3.0
        })
        .count();
    assert!((false_alarms as f64) / 1000.0 < 0.05, "{false_alarms}");
}

#[test]
fn sampling_is_deterministic_and_mode_independent() {
    let g = exact();
    let seeds = latticewalk::exec::derive_seeds(39, 16);
    let lossless = LossVector::lossless(9);
    let a = sample_many(&g, 50_000, &lossless, 0.5, &seeds, Execution::Sequential).unwrap();
    let b = sample_many(&g, 50_000, &lossless, 0.5, &seeds, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0], a[1]);
}

#[test]
fn rejects_invalid_requests() {
    let g = exact();
    let lossless = LossVector::lossless(9);
    assert!(sample_counts(&g, 0, &lossless, 0.5, 1).is_err());
    assert!(sample_counts(&g, 10, &LossVector::lossless(8), 0.5, 1).is_err());
    assert!(sample_counts(&g, 10, &lossless, 1.0, 1).is_err());
    assert!(sample_counts(&g.scaled(2.0).unwrap(), 10, &lossless, 0.5, 1).is_err());
    assert!(LossVector::new(vec![0.5, 0.0]).is_err());
    assert!(LossVector::new(vec![1.2]).is_err());
}
