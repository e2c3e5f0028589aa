#![allow(dead_code)]

use std::collections::HashMap;

use latticewalk::nalgebra::DMatrix;
use latticewalk::num_complex::Complex64;
use latticewalk::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-photon output probabilities by explicit second quantization: apply
/// the evolved creation operators `a_in^+ -> sum_k U[k][in] a_k^+` to the
/// vacuum in the occupation-number basis and square the amplitudes.
pub fn fock_oracle(u: &UnitaryMatrix, i: usize, j: usize) -> DMatrix<f64> {
    let n = u.dim();
    let mut state: HashMap<Vec<u8>, Complex64> = HashMap::new();
    state.insert(vec![0; n], Complex64::new(1.0, 0.0));
    for input in [j, i] {
        let mut next: HashMap<Vec<u8>, Complex64> = HashMap::new();
        for (occ, amp) in &state {
            for k in 0..n {
                let mut o = occ.clone();
                let boson = ((o[k] + 1) as f64).sqrt();
                o[k] += 1;
                *next.entry(o).or_default() += amp * u.get(k, input) * boson;
            }
        }
        state = next;
    }
    let mut p = DMatrix::zeros(n, n);
    for (occ, amp) in state {
        let modes: Vec<usize> =
            occ.iter().enumerate().flat_map(|(k, &c)| std::iter::repeat_n(k, c as usize)).collect();
        let (k, l) = (modes[0], modes[1]);
        p[(k, l)] += amp.norm_sqr();
        if k != l {
            p[(l, k)] = p[(k, l)];
        }
    }
    p
}

/// Distinguishable photons as independent walkers, folded onto unordered pairs.
pub fn independent_particle_oracle(u: &UnitaryMatrix, i: usize, j: usize) -> DMatrix<f64> {
    let n = u.dim();
    let pi: Vec<f64> = (0..n).map(|k| u.get(k, i).norm_sqr()).collect();
    let pj: Vec<f64> = (0..n).map(|k| u.get(k, j).norm_sqr()).collect();
    DMatrix::from_fn(n, n, |k, l| if k == l { pi[k] * pj[k] } else { pi[k] * pj[l] + pi[l] * pj[k] })
}

/// `exp(i c z)` by a truncated Taylor series.
pub fn taylor_expm(c: &CouplingMatrix, z: f64, terms: usize) -> DMatrix<Complex64> {
    let n = c.dim();
    let a = c.matrix() * Complex64::new(0.0, z);
    let mut term = DMatrix::<Complex64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..terms {
        term = &term * &a / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    sum
}

pub fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff_real(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The 3x3 disordered lattice used throughout the statistical tests.
pub fn synthetic_lattice() -> UnitaryMatrix {
    let g = LatticeGeometry::grid(3, 3, 1.0).unwrap();
    let c = build_coupling_matrix(&g, 1.0, 0.5, 0.0).unwrap();
    let segments = apply_disorder(&c, &DisorderSpec::new(2017, 0.3, 4, 0.2), 2.0).unwrap();
    evolve_segments(&segments).unwrap()
}

pub fn corner_pair() -> PairInput {
    PairInput::identical(0, 8).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Event-by-event acquisition: draw each pair, drop it on loss or on a
/// failed bunching split, tally what survives.
pub fn event_sampler(
    gamma: &CorrelationMatrix,
    n_pairs: u64,
    eta: &[f64],
    split: f64,
    seed: u64,
) -> DMatrix<f64> {
    let n = gamma.dim();
    let cells = gamma.upper_entries();
    let mut cdf = Vec::with_capacity(cells.len());
    let mut acc = 0.0;
    for &(_, _, p) in &cells {
        acc += p;
        cdf.push(acc);
    }
    let mut r = rng(seed);
    let mut counts = DMatrix::zeros(n, n);
    for _ in 0..n_pairs {
        let x: f64 = r.random::<f64>() * acc;
        let idx = cdf.partition_point(|&c| c < x).min(cells.len() - 1);
        let (i, j, _) = cells[idx];
        if r.random::<f64>() >= eta[i] || r.random::<f64>() >= eta[j] {
            continue;
        }
        if i == j {
            // each photon picks a splitter port independently
            let a = r.random::<f64>() < split;
            let b = r.random::<f64>() < split;
            if a == b {
                continue;
            }
        }
        counts[(i, j)] += 1.0;
    }
    counts
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
