mod common;

use common::*;
use latticewalk::tomography::{gauge_distance, simulate_measurements, submatrix, wrap_phase};
use latticewalk::*;
use rand::Rng;

const INPUTS: [usize; 3] = [0, 7, 8];

fn fit(
    u: &UnitaryMatrix,
    mode: PlanMode,
    events: Option<u64>,
    seed: u64,
    opts: &ReconstructOptions,
) -> SubmatrixEstimate {
    let plan = plan_scans(&INPUTS, u.dim(), mode).unwrap();
    let m = simulate_measurements(u, &INPUTS, &plan, events, seed).unwrap();
    reconstruct_submatrix(&m.singles, &m.visibilities, opts).unwrap()
}

#[test]
fn plan_sizes() {
    assert_eq!(plan_scans(&INPUTS, 9, PlanMode::Compact).unwrap().len(), 24);
    assert_eq!(plan_scans(&INPUTS, 9, PlanMode::Full).unwrap().len(), 108);
    assert_eq!(plan_scans(&[0, 1], 2, PlanMode::Compact).unwrap().len(), 1);
    assert_eq!(plan_scans(&[0, 1], 2, PlanMode::Full).unwrap().len(), 1);
    assert!(plan_scans(&[0], 9, PlanMode::Full).is_err());
    let compact = plan_scans(&INPUTS, 9, PlanMode::Compact).unwrap();
    for pair in [(0, 7), (0, 8), (7, 8)] {
        assert_eq!(compact.iter().filter(|s| s.input_pair == pair).count(), 8);
    }
}

#[test]
fn every_plan_covers_every_phase_twice() {
    // each non-gauge phase (row r >= 1, column c >= 1) should enter at least two scans
    for mode in [PlanMode::Compact, PlanMode::Standard, PlanMode::Full] {
        let plan = plan_scans(&INPUTS, 9, mode).unwrap();
        for r in 1..9 {
            for &col in &INPUTS[1..] {
                let hits = plan
                    .iter()
                    .filter(|s| {
                        let (a, b) = s.input_pair;
                        let (k, l) = s.output_pair;
                        (k == r || l == r) && (a == col || b == col)
                    })
                    .count();
                assert!(hits >= 2, "{mode:?}: row {r} input {col} has {hits}");
            }
        }
    }
}

#[test]
fn noiseless_full_plan_recovers_truth() {
    let mut r = rng(41);
    for _ in 0..5 {
        let u = haar_unitary(9, &mut r);
        let est = fit(&u, PlanMode::Full, None, 0, &ReconstructOptions::default());
        let truth = submatrix(&u, &INPUTS).unwrap();
        assert!(gauge_distance(&est.complex_matrix(), &truth).unwrap() < 1e-6);
        assert!(est.consistent);
        assert!(est.unconstrained.is_empty());
    }
}

#[test]
fn reproduces_its_inputs_within_residual_bound() {
    let u = haar_unitary(9, &mut rng(42));
    let plan = plan_scans(&INPUTS, 9, PlanMode::Standard).unwrap();
    let m = simulate_measurements(&u, &INPUTS, &plan, Some(50_000), 7).unwrap();
    let est = reconstruct_submatrix(&m.singles, &m.visibilities, &ReconstructOptions::default()).unwrap();
    let bound = 10.0 * (est.residual / est.n_constraints as f64).sqrt();
    for rec in &m.visibilities {
        let model = est.visibility(rec.input_pair, rec.output_pair).unwrap();
        assert!((model - rec.visibility).abs() <= bound.max(1e-12));
    }
}

#[test]
fn restarts_agree_after_gauge_fixing() {
    let u = haar_unitary(9, &mut rng(43));
    let a = fit(&u, PlanMode::Compact, None, 0, &ReconstructOptions { seed: 1, ..Default::default() });
    let b = fit(
        &u,
        PlanMode::Compact,
        None,
        0,
        &ReconstructOptions { seed: 987_654, restarts: 48, ..Default::default() },
    );
    assert!(gauge_distance(&a.complex_matrix(), &b.complex_matrix()).unwrap() < 1e-6);
}

#[test]
fn execution_modes_agree_bitwise() {
    let u = haar_unitary(9, &mut rng(44));
    let seq = fit(
        &u,
        PlanMode::Compact,
        Some(100_000),
        3,
        &ReconstructOptions { exec: Execution::Sequential, ..Default::default() },
    );
    let par = fit(
        &u,
        PlanMode::Compact,
        Some(100_000),
        3,
        &ReconstructOptions { exec: Execution::Parallel, ..Default::default() },
    );
    assert_eq!(seq, par);
}

#[test]
fn moduli_columns_are_normalized() {
    let u = haar_unitary(9, &mut rng(45));
    let est = fit(&u, PlanMode::Compact, Some(100_000), 5, &ReconstructOptions::default());
    for c in 0..3 {
        let s: f64 = est.moduli.column(c).iter().map(|m| m * m).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}

#[test]
fn gauge_convention_holds() {
    let u = haar_unitary(9, &mut rng(46));
    let est = fit(&u, PlanMode::Compact, None, 0, &ReconstructOptions::default());
    assert!(est.phases.row(0).iter().all(|&p| p == 0.0));
    assert!(est.phases.column(0).iter().all(|&p| p == 0.0));
    assert!(est.phases.iter().all(|&p| p > -std::f64::consts::PI && p <= std::f64::consts::PI));
}

#[test]
fn perturbed_visibilities_still_predict_well() {
    let mut r = rng(47);
    let u = haar_unitary(9, &mut r);
    let plan = plan_scans(&INPUTS, 9, PlanMode::Full).unwrap();
    let mut m = simulate_measurements(&u, &INPUTS, &plan, None, 0).unwrap();
    let normal = rand_distr::Normal::new(0.0, 0.01).unwrap();
    for v in &mut m.visibilities {
        v.visibility = (v.visibility + r.sample(normal)).clamp(-1.0, 1.0);
    }
    let est = reconstruct_submatrix(&m.singles, &m.visibilities, &ReconstructOptions::default()).unwrap();
    for (i, j) in [(0, 8), (0, 7), (7, 8)] {
        let pair = PairInput::identical(i, j).unwrap();
        let s =
            similarity(&predict_correlation(&est, &pair).unwrap(), &quantum_correlation(&u, &pair).unwrap())
                .unwrap();
        assert!(s >= 0.99, "{s}");
    }
}

#[test]
fn exact_estimate_predicts_exact_correlation() {
    let u = haar_unitary(9, &mut rng(48));
    let est = fit(&u, PlanMode::Full, None, 0, &ReconstructOptions::default());
    for mu in [0.0, 0.4, 1.0] {
        let pair = PairInput::new(0, 8, mu).unwrap();
        let a = predict_correlation(&est, &pair).unwrap();
        let b = partial_correlation(&u, &pair).unwrap();
        assert!(max_abs_diff_real(a.matrix(), b.matrix()) < 1e-9);
    }
    assert!(predict_correlation(&est, &PairInput::identical(0, 3).unwrap()).is_err());
}

#[test]
fn coupler_phases_recovered() {
    let u = UnitaryMatrix::balanced_coupler();
    let plan = plan_scans(&[0, 1], 2, PlanMode::Full).unwrap();
    let m = simulate_measurements(&u, &[0, 1], &plan, None, 0).unwrap();
    let est = reconstruct_submatrix(&m.singles, &m.visibilities, &ReconstructOptions::default()).unwrap();
    // gauge-fixed coupler is [[1, 1], [1, -1]] / sqrt 2
    assert!((wrap_phase(est.phases[(1, 1)]).abs() - std::f64::consts::PI).abs() < 1e-6);
    assert!(gauge_distance(&est.complex_matrix(), u.matrix()).unwrap() < 1e-6);
}

#[test]
fn disconnected_constraints_are_reported() {
    let u = haar_unitary(9, &mut rng(49));
    let plan: Vec<Scan> = plan_scans(&INPUTS, 9, PlanMode::Compact)
        .unwrap()
        .into_iter()
        .filter(|s| s.output_pair.0 != 4 && s.output_pair.1 != 4)
        .collect();
    let m = simulate_measurements(&u, &INPUTS, &plan, None, 0).unwrap();
    match reconstruct_submatrix(&m.singles, &m.visibilities, &ReconstructOptions::default()) {
        Err(Error::Underdetermined { phases }) => assert!(phases.iter().any(|&(r, _)| r == 4)),
        other => panic!("expected an underdetermined error, got {other:?}"),
    }
}

#[test]
fn inconsistent_data_is_flagged() {
    let u = haar_unitary(9, &mut rng(50));
    let plan = plan_scans(&INPUTS, 9, PlanMode::Full).unwrap();
    let mut m = simulate_measurements(&u, &INPUTS, &plan, None, 0).unwrap();
    let mut r = rng(51);
    for v in &mut m.visibilities {
        v.visibility = r.random_range(-1.0..1.0);
    }
    let est = reconstruct_submatrix(&m.singles, &m.visibilities, &ReconstructOptions::default()).unwrap();
    assert!(!est.consistent);
}
