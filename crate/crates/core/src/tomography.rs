//! Characterization of the input-mode columns of an unknown unitary from
//! single-photon transmission (moduli) and two-photon HOM visibilities
//! (relative phases).
//!
//! Gauge convention: output row 0 and the first input column are real and
//! non-negative. Visibilities are also blind to complex conjugation of the
//! whole submatrix; of the two conjugate solutions the one with the
//! lexicographically smaller phase vector is returned.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::correlation::{correlation_from_columns, CorrelationMatrix, PairInput, SinglesDistribution};
use crate::error::{check_index, Error, Result};
use crate::evolution::UnitaryMatrix;
use crate::exec::{derive_seeds, Execution};
use crate::lsq::{levenberg_marquardt, LmOptions};

/// Moduli below this carry no usable phase information.
pub const MODULUS_FLOOR: f64 = 1e-8;

/// Visibility of the coincidence dip at one output pair for one input pair,
/// `(classical - quantum) / classical`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityRecord {
    pub input_pair: (usize, usize),
    pub output_pair: (usize, usize),
    pub visibility: f64,
    /// One-sigma uncertainty; weights the fit when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
}

/// One HOM-dip measurement setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scan {
    pub input_pair: (usize, usize),
    pub output_pair: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    /// `n_outputs - 1` scans per input pair (24 for three inputs and nine
    /// outputs). Pairs containing the reference input use outputs
    /// `(0, l)`; the remaining pairs use the chain `(l, l + 1)`, which ties
    /// the rows together and removes the per-row conjugation ambiguity a
    /// pure star would leave.
    Compact,
    /// Star `(0, l)` plus chain `(l, l + 1)` for every input pair.
    Standard,
    /// Every distinct output pair for every input pair.
    Full,
}

/// `-2 Re(U_ka U_lb conj(U_kb U_la)) / (|U_ka U_lb|^2 + |U_kb U_la|^2)`.
fn visibility_from_amplitudes(uka: Complex64, ulb: Complex64, ukb: Complex64, ula: Complex64) -> f64 {
    let direct = uka * ulb;
    let exchange = ukb * ula;
    let denom = direct.norm_sqr() + exchange.norm_sqr();
    if denom == 0.0 {
        0.0
    } else {
        -2.0 * (direct * exchange.conj()).re / denom
    }
}

pub fn simulate_visibility(
    u: &UnitaryMatrix,
    input_pair: (usize, usize),
    output_pair: (usize, usize),
) -> Result<VisibilityRecord> {
    let n = u.dim();
    let (i, j) = input_pair;
    let (k, l) = output_pair;
    for m in [i, j, k, l] {
        check_index(m, n)?;
    }
    if i == j {
        return Err(Error::param("input modes of a HOM scan must differ"));
    }
    if k == l {
        return Err(Error::param("bunched output pairs carry no HOM dip; use distinct outputs"));
    }
    let visibility = visibility_from_amplitudes(u.get(k, i), u.get(l, j), u.get(k, j), u.get(l, i));
    Ok(VisibilityRecord { input_pair, output_pair, visibility, uncertainty: None })
}

/// Measurement plan over all pairs of `input_modes`.
pub fn plan_scans(input_modes: &[usize], n_outputs: usize, mode: PlanMode) -> Result<Vec<Scan>> {
    if input_modes.len() < 2 {
        return Err(Error::param("at least two input modes are required"));
    }
    if n_outputs < 2 {
        return Err(Error::param("at least two output modes are required"));
    }
    for (a, &m) in input_modes.iter().enumerate() {
        check_index(m, n_outputs)?;
        if input_modes[..a].contains(&m) {
            return Err(Error::param(format!("input mode {} listed twice", m + 1)));
        }
    }
    let star: Vec<(usize, usize)> = (1..n_outputs).map(|l| (0, l)).collect();
    let chain: Vec<(usize, usize)> = (0..n_outputs - 1).map(|l| (l, l + 1)).collect();
    let mut scans = Vec::new();
    for a in 0..input_modes.len() {
        for b in a + 1..input_modes.len() {
            let input_pair = (input_modes[a], input_modes[b]);
            let outputs: Vec<(usize, usize)> = match mode {
                PlanMode::Compact if a == 0 => star.clone(),
                PlanMode::Compact => chain.clone(),
                PlanMode::Standard => {
                    let mut o = star.clone();
                    o.extend(chain.iter().filter(|p| p.0 != 0));
                    o
                }
                PlanMode::Full => {
                    (0..n_outputs).flat_map(|k| (k + 1..n_outputs).map(move |l| (k, l))).collect()
                }
            };
            scans.extend(outputs.into_iter().map(|output_pair| Scan { input_pair, output_pair }));
        }
    }
    Ok(scans)
}

/// Reconstructed input-mode columns, `moduli[(row, c)] * exp(i phases[(row, c)])`
/// for input `input_modes[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmatrixEstimate {
    pub input_modes: Vec<usize>,
    pub moduli: DMatrix<f64>,
    pub phases: DMatrix<f64>,
    /// Sum of squared visibility misfits.
    pub residual: f64,
    pub n_constraints: usize,
    /// (output row, input mode) entries whose modulus is below
    /// [`MODULUS_FLOOR`]; their phase is reported as 0.
    pub unconstrained: Vec<(usize, usize)>,
    /// False when the RMS misfit exceeded the configured threshold.
    pub consistent: bool,
}

impl SubmatrixEstimate {
    pub fn n_outputs(&self) -> usize {
        self.moduli.nrows()
    }

    pub fn rms_misfit(&self) -> f64 {
        if self.n_constraints == 0 {
            0.0
        } else {
            (self.residual / self.n_constraints as f64).sqrt()
        }
    }

    pub fn complex_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.moduli.nrows(), self.moduli.ncols(), |r, c| {
            Complex64::from_polar(self.moduli[(r, c)], self.phases[(r, c)])
        })
    }

    fn slot(&self, mode: usize) -> Result<usize> {
        self.input_modes
            .iter()
            .position(|&m| m == mode)
            .ok_or_else(|| Error::param(format!("input mode {} is not covered by the estimate", mode + 1)))
    }

    fn column(&self, slot: usize) -> Vec<Complex64> {
        (0..self.n_outputs())
            .map(|r| Complex64::from_polar(self.moduli[(r, slot)], self.phases[(r, slot)]))
            .collect()
    }

    /// Model visibility for a scan, from the reconstructed amplitudes.
    pub fn visibility(&self, input_pair: (usize, usize), output_pair: (usize, usize)) -> Result<f64> {
        let (a, b) = (self.slot(input_pair.0)?, self.slot(input_pair.1)?);
        let (k, l) = output_pair;
        check_index(k, self.n_outputs())?;
        check_index(l, self.n_outputs())?;
        let m = self.complex_matrix();
        Ok(visibility_from_amplitudes(m[(k, a)], m[(l, b)], m[(k, b)], m[(l, a)]))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReconstructOptions {
    /// Random phase initializations, in addition to the branch-enumerated seeds.
    pub restarts: usize,
    /// Branch-enumeration candidates kept per step.
    pub beam_width: usize,
    /// Beam survivors polished by the optimizer.
    pub branch_seeds: usize,
    pub seed: u64,
    /// RMS visibility misfit above which the estimate is flagged
    /// inconsistent, used when some record lacks an uncertainty.
    pub max_rms_misfit: f64,
    /// Bound on `sqrt(chi^2 / count)` when every record carries an uncertainty.
    pub max_reduced_chi: f64,
    pub exec: Execution,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            restarts: 32,
            beam_width: 256,
            branch_seeds: 8,
            seed: 0,
            max_rms_misfit: 0.05,
            max_reduced_chi: 3.0,
            exec: Execution::default(),
        }
    }
}

/// Phase-dependent term of one scan: visibility is
/// `-2 A B cos(delta) / (A^2 + B^2)` with `delta = sum coef * theta`.
#[derive(Debug, Clone)]
struct Constraint {
    /// (parameter index, coefficient); gauge-fixed entries are omitted.
    terms: Vec<(usize, f64)>,
    amplitude: f64,
    measured: f64,
    weight: f64,
}

impl Constraint {
    fn delta(&self, theta: &[f64]) -> f64 {
        self.terms.iter().map(|&(p, c)| c * theta[p]).sum()
    }

    fn model(&self, theta: &[f64]) -> f64 {
        -self.amplitude * self.delta(theta).cos()
    }
}

struct Problem {
    constraints: Vec<Constraint>,
    n_params: usize,
}

impl Problem {
    fn weighted_cost(&self, theta: &[f64]) -> f64 {
        self.constraints.iter().map(|c| (c.weight * (c.measured - c.model(theta))).powi(2)).sum()
    }

    fn residual_and_jacobian(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.constraints.len();
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, self.n_params);
        for (row, c) in self.constraints.iter().enumerate() {
            let d = c.delta(theta);
            r[row] = c.weight * (c.model(theta) - c.measured);
            let dv = c.weight * c.amplitude * d.sin();
            for &(p, coef) in &c.terms {
                j[(row, p)] += dv * coef;
            }
        }
        (r, j)
    }

    fn polish(&self, start: &[f64]) -> (Vec<f64>, f64) {
        let opts = LmOptions { max_iter: 500, ..LmOptions::default() };
        let res = levenberg_marquardt(start, opts, |t| self.residual_and_jacobian(t));
        let x: Vec<f64> = res.x.iter().map(|&v| wrap_phase(v)).collect();
        let cost = self.weighted_cost(&x);
        (x, cost)
    }
}

/// Map to (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x - 2.0 * PI * (x / (2.0 * PI)).round();
    if y <= -PI {
        y += 2.0 * PI;
    }
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

fn residual_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.max(b) + 1e-20
}

/// Recover moduli and phases of the input-mode columns.
///
/// Column order follows `singles`. Phases are fitted by weighted nonlinear
/// least squares from (a) branch-enumerated seeds, built by fixing one
/// unknown phase per scan up to the sign of `acos` and keeping the best
/// partial assignments, and (b) `restarts` random initializations. The
/// minimal-residual polish wins; ties go to the lexicographically smaller
/// phase vector, independent of evaluation order.
pub fn reconstruct_submatrix(
    singles: &[SinglesDistribution],
    visibilities: &[VisibilityRecord],
    opts: &ReconstructOptions,
) -> Result<SubmatrixEstimate> {
    if singles.len() < 2 {
        return Err(Error::param("singles for at least two input modes are required"));
    }
    let n = singles[0].probabilities.len();
    let input_modes: Vec<usize> = singles.iter().map(|s| s.input_mode).collect();
    for (c, s) in singles.iter().enumerate() {
        if s.probabilities.len() != n {
            return Err(Error::Dimension("singles distributions differ in length".into()));
        }
        if input_modes[..c].contains(&s.input_mode) {
            return Err(Error::param(format!(
                "input mode {} has two singles distributions",
                s.input_mode + 1
            )));
        }
        if s.probabilities.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::validation("singles probabilities must be non-negative"));
        }
    }
    let m = singles.len();
    let moduli = DMatrix::from_fn(n, m, |r, c| singles[c].probabilities[r].sqrt());

    // parameter layout: rows >= 1, slots >= 1, modulus above the floor
    let mut param_of = DMatrix::<Option<usize>>::from_element(n, m, None);
    let mut params = Vec::new();
    let mut unconstrained = Vec::new();
    for r in 0..n {
        for c in 0..m {
            if moduli[(r, c)] < MODULUS_FLOOR {
                unconstrained.push((r, input_modes[c]));
            } else if r > 0 && c > 0 {
                param_of[(r, c)] = Some(params.len());
                params.push((r, c));
            }
        }
    }

    let slot = |mode: usize| -> Result<usize> {
        input_modes.iter().position(|&x| x == mode).ok_or_else(|| {
            Error::param(format!("visibility references input mode {} without singles", mode + 1))
        })
    };

    let mut constraints = Vec::new();
    // union-find over parameters plus a gauge root at index n_params
    let root = params.len();
    let mut parent: Vec<usize> = (0..=root).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for rec in visibilities {
        let (a, b) = (slot(rec.input_pair.0)?, slot(rec.input_pair.1)?);
        let (k, l) = rec.output_pair;
        check_index(k, n)?;
        check_index(l, n)?;
        if a == b || k == l {
            return Err(Error::param("visibility records need distinct inputs and distinct outputs"));
        }
        if !(rec.visibility.abs() <= 1.0 + 1e-9) {
            return Err(Error::validation(format!("visibility {} outside [-1, 1]", rec.visibility)));
        }
        let entries = [((k, a), 1.0), ((l, b), 1.0), ((k, b), -1.0), ((l, a), -1.0)];
        if entries.iter().any(|&((r, c), _)| moduli[(r, c)] < MODULUS_FLOOR) {
            continue;
        }
        let big_a = moduli[(k, a)] * moduli[(l, b)];
        let big_b = moduli[(k, b)] * moduli[(l, a)];
        let amplitude = 2.0 * big_a * big_b / (big_a * big_a + big_b * big_b);
        let mut terms = Vec::new();
        let mut touches_gauge = false;
        for &((r, c), coef) in &entries {
            match param_of[(r, c)] {
                Some(p) => terms.push((p, coef)),
                None => touches_gauge = true,
            }
        }
        let anchor = if touches_gauge { Some(root) } else { terms.first().map(|t| t.0) };
        if let Some(anchor) = anchor {
            for &(p, _) in &terms {
                let (x, y) = (find(&mut parent, p), find(&mut parent, anchor));
                parent[x] = y;
            }
        }
        let weight = match rec.uncertainty {
            Some(s) if s.is_finite() && s > 0.0 => 1.0 / s.max(1e-6),
            _ => 1.0,
        };
        constraints.push(Constraint { terms, amplitude, measured: rec.visibility, weight });
    }
    let floating: Vec<(usize, usize)> = (0..params.len())
        .filter(|&p| find(&mut parent, p) != find(&mut parent, root))
        .map(|p| (params[p].0, input_modes[params[p].1]))
        .collect();
    if !floating.is_empty() {
        return Err(Error::Underdetermined { phases: floating });
    }

    let problem = Problem { constraints, n_params: params.len() };
    let theta = solve_phases(&problem, opts);

    let mut phases = DMatrix::zeros(n, m);
    for (p, &(r, c)) in params.iter().enumerate() {
        phases[(r, c)] = theta[p];
    }
    let mut estimate = SubmatrixEstimate {
        input_modes,
        moduli,
        phases,
        residual: 0.0,
        n_constraints: visibilities.len(),
        unconstrained,
        consistent: true,
    };
    let mut residual = 0.0;
    let mut chi2 = 0.0;
    let mut all_weighted = !visibilities.is_empty();
    for rec in visibilities {
        let d = rec.visibility - estimate.visibility(rec.input_pair, rec.output_pair)?;
        residual += d * d;
        match rec.uncertainty {
            Some(s) if s > 0.0 => chi2 += (d / s.max(1e-6)).powi(2),
            _ => all_weighted = false,
        }
    }
    estimate.residual = residual;
    estimate.consistent = if all_weighted {
        (chi2 / visibilities.len() as f64).sqrt() <= opts.max_reduced_chi
    } else {
        estimate.rms_misfit() <= opts.max_rms_misfit
    };
    Ok(estimate)
}

fn solve_phases(problem: &Problem, opts: &ReconstructOptions) -> Vec<f64> {
    let p = problem.n_params;
    if p == 0 {
        return Vec::new();
    }
    let mut starts = branch_seeds(problem, opts.beam_width.max(1));
    starts.truncate(opts.branch_seeds.max(1));
    let seeds = derive_seeds(opts.seed, opts.restarts);
    starts.extend(seeds.iter().map(|&s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        (0..p).map(|_| rng.random_range(-PI..PI)).collect::<Vec<f64>>()
    }));

    let results = opts.exec.map_slice(&starts, |s| problem.polish(s));
    let canonical: Vec<(Vec<f64>, f64)> = results
        .into_iter()
        .map(|(x, cost)| {
            let neg: Vec<f64> = x.iter().map(|&v| wrap_phase(-v)).collect();
            if lexicographic(&neg, &x) == Ordering::Less {
                (neg, cost)
            } else {
                (x, cost)
            }
        })
        .collect();
    let mut best = &canonical[0];
    for cand in &canonical[1..] {
        let better = if residual_tie(cand.1, best.1) {
            lexicographic(&cand.0, &best.0) == Ordering::Less
        } else {
            cand.1 < best.1
        };
        if better {
            best = cand;
        }
    }
    best.0.clone()
}

/// Beam search over the sign of `acos` for one newly determined phase per
/// scan, ordered by scan sensitivity.
fn branch_seeds(problem: &Problem, beam_width: usize) -> Vec<Vec<f64>> {
    let p = problem.n_params;
    let mut assigned = vec![false; p];
    let mut beam: Vec<(Vec<f64>, f64)> = vec![(vec![0.0; p], 0.0)];
    let mut used = vec![false; problem.constraints.len()];
    while assigned.iter().any(|a| !a) {
        let pick = problem
            .constraints
            .iter()
            .enumerate()
            .filter(|(idx, c)| !used[*idx] && c.terms.iter().filter(|(q, _)| !assigned[*q]).count() == 1)
            .max_by(|a, b| {
                a.1.amplitude.partial_cmp(&b.1.amplitude).unwrap_or(Ordering::Equal).then(b.0.cmp(&a.0))
            });
        let Some((idx, c)) = pick else {
            // nothing pins a single phase: start the lowest free one at 0
            let q = assigned.iter().position(|a| !a).expect("unassigned phase exists");
            assigned[q] = true;
            continue;
        };
        used[idx] = true;
        let (q, coef) = *c.terms.iter().find(|(q, _)| !assigned[*q]).expect("one free term");
        let cos_delta = if c.amplitude > 0.0 { (-c.measured / c.amplitude).clamp(-1.0, 1.0) } else { 1.0 };
        let delta = cos_delta.acos();
        assigned[q] = true;
        let mut next = Vec::with_capacity(beam.len() * 2);
        for (theta, _) in &beam {
            let known: f64 = c.terms.iter().filter(|(t, _)| *t != q).map(|&(t, k)| k * theta[t]).sum();
            for sign in [1.0, -1.0] {
                let mut t = theta.clone();
                t[q] = wrap_phase((sign * delta - known) / coef);
                next.push(t);
            }
        }
        let mut scored: Vec<(Vec<f64>, f64)> = next
            .into_iter()
            .map(|t| {
                let cost: f64 = problem
                    .constraints
                    .iter()
                    .filter(|c| c.terms.iter().all(|(q, _)| assigned[*q]))
                    .map(|c| (c.weight * (c.measured - c.model(&t))).powi(2))
                    .sum();
                (t, cost)
            })
            .collect();
        scored.sort_by(|a, b| {
            a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then_with(|| lexicographic(&a.0, &b.0))
        });
        scored.truncate(beam_width);
        beam = scored;
    }
    beam.into_iter().map(|(t, _)| t).collect()
}

/// Two-photon correlation predicted from the reconstructed columns,
/// renormalized over unordered pairs.
pub fn predict_correlation(estimate: &SubmatrixEstimate, pair: &PairInput) -> Result<CorrelationMatrix> {
    let a = estimate.column(estimate.slot(pair.mode_i())?);
    let b = estimate.column(estimate.slot(pair.mode_j())?);
    correlation_from_columns(&a, &b, pair.indistinguishability())?.normalized()
}

/// Columns `input_modes` of `u`.
pub fn submatrix(u: &UnitaryMatrix, input_modes: &[usize]) -> Result<DMatrix<Complex64>> {
    for &m in input_modes {
        check_index(m, u.dim())?;
    }
    Ok(DMatrix::from_fn(u.dim(), input_modes.len(), |r, c| u.get(r, input_modes[c])))
}

/// Rephase so that row 0 and column 0 are real and non-negative.
pub fn gauge_fix(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut out = m.clone();
    for c in 0..out.ncols() {
        let z = out[(0, c)];
        if z.norm() > 0.0 {
            let ph = z.conj() / z.norm();
            for r in 0..out.nrows() {
                out[(r, c)] *= ph;
            }
        }
    }
    for r in 0..out.nrows() {
        let z = out[(r, 0)];
        if z.norm() > 0.0 {
            let ph = z.conj() / z.norm();
            for c in 0..out.ncols() {
                out[(r, c)] *= ph;
            }
        }
    }
    out
}

/// Largest entrywise difference between `a` and `b` after gauge fixing,
/// minimized over complex conjugation of `b`.
pub fn gauge_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension("submatrices differ in shape".into()));
    }
    let (ga, gb) = (gauge_fix(a), gauge_fix(b));
    let direct = (&ga - &gb).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let conj = ga.iter().zip(gb.iter()).map(|(x, y)| (x - y.conj()).norm()).fold(0.0, f64::max);
    Ok(direct.min(conj))
}

/// Simulated characterization data.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub singles: Vec<SinglesDistribution>,
    pub visibilities: Vec<VisibilityRecord>,
}

/// Singles and visibilities for `plan`, exact when `events` is `None`.
///
/// With `events = Some(n)`, each singles distribution is a multinomial
/// histogram of `n` photons, and each scan draws `n` pairs at zero delay
/// (coincidence probability from the quantum correlation) and `n` pairs far
/// outside the dip (classical correlation); the visibility is
/// `1 - Q / C` with first-order Poisson uncertainty.
pub fn simulate_measurements(
    u: &UnitaryMatrix,
    input_modes: &[usize],
    plan: &[Scan],
    events: Option<u64>,
    seed: u64,
) -> Result<Measurements> {
    let n = u.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut singles = Vec::with_capacity(input_modes.len());
    for &mode in input_modes {
        let exact = crate::correlation::singles_distribution(u, mode)?;
        let probabilities = match events {
            None => exact.probabilities,
            Some(total) => {
                let counts = multinomial(&mut rng, total, &exact.probabilities)?;
                counts.iter().map(|&c| c as f64 / total as f64).collect()
            }
        };
        singles.push(SinglesDistribution { input_mode: mode, probabilities });
    }
    let mut visibilities = Vec::with_capacity(plan.len());
    for scan in plan {
        let exact = simulate_visibility(u, scan.input_pair, scan.output_pair)?;
        let record = match events {
            None => exact,
            Some(total) => {
                let pair = PairInput::identical(scan.input_pair.0, scan.input_pair.1)?;
                let (k, l) = scan.output_pair;
                let q = crate::correlation::quantum_correlation(u, &pair)?.get(k, l);
                let c = crate::correlation::classical_correlation(u, &pair)?.get(k, l);
                let qc = binomial(&mut rng, total, q)? as f64;
                let cc = binomial(&mut rng, total, c)? as f64;
                let (visibility, sigma) = if cc > 0.0 {
                    let ratio = qc / cc;
                    let sigma = qc.max(1.0).sqrt() / cc * (1.0 + ratio).sqrt();
                    ((1.0 - ratio).clamp(-1.0, 1.0), sigma)
                } else {
                    (0.0, 1.0)
                };
                VisibilityRecord { uncertainty: Some(sigma), visibility, ..exact }
            }
        };
        visibilities.push(record);
    }
    debug_assert!(singles.iter().all(|s| s.probabilities.len() == n));
    Ok(Measurements { singles, visibilities })
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> Result<u64> {
    let p = p.clamp(0.0, 1.0);
    if p == 0.0 {
        return Ok(0);
    }
    if p == 1.0 {
        return Ok(n);
    }
    Binomial::new(n, p)
        .map(|d| d.sample(rng))
        .map_err(|e| Error::Numerical(format!("binomial({n}, {p}): {e}")))
}

fn multinomial(rng: &mut ChaCha8Rng, n: u64, probs: &[f64]) -> Result<Vec<u64>> {
    let mut remaining = n;
    let mut mass: f64 = probs.iter().sum();
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        let k = if remaining == 0 || p <= 0.0 {
            0
        } else if p >= mass {
            remaining
        } else {
            binomial(rng, remaining, p / mass)?
        };
        remaining -= k;
        mass = (mass - p).max(0.0);
        out.push(k);
    }
    Ok(out)
}

/// Gaussian dip (or peak) `floor * (1 - depth * exp(-((tau - center) / width)^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipFit {
    pub floor: f64,
    pub depth: f64,
    pub center: f64,
    pub width: f64,
    pub residual: f64,
}

impl DipFit {
    /// Relative dip depth, i.e. the HOM visibility.
    pub fn visibility(&self) -> f64 {
        self.depth
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.floor * (1.0 - self.depth * (-((tau - self.center) / self.width).powi(2)).exp())
    }
}

/// Least-squares Gaussian fit to a coincidence-versus-delay scan.
pub fn fit_dip(curve: &[(f64, f64)]) -> Result<DipFit> {
    if curve.len() < 4 {
        return Err(Error::param("a dip fit needs at least four points"));
    }
    if curve.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::param("dip scan contains non-finite values"));
    }
    let mut pts = curve.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let floor0 = 0.5 * (pts[0].1 + pts[pts.len() - 1].1);
    if !(floor0 > 0.0) {
        return Err(Error::Numerical("dip scan has no positive background".into()));
    }
    let (center_idx, _) = pts
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (p.1 - floor0).abs()))
        .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let center0 = pts[center_idx].0;
    let depth0 = 1.0 - pts[center_idx].1 / floor0;
    let half = 0.5 * (pts[center_idx].1 - floor0).abs();
    let inside: Vec<f64> = pts.iter().filter(|p| (p.1 - floor0).abs() >= half).map(|p| p.0).collect();
    let span = inside.last().unwrap_or(&center0) - inside.first().unwrap_or(&center0);
    let full = pts[pts.len() - 1].0 - pts[0].0;
    let width0 = if span > 0.0 { span / (2.0 * 2f64.ln().sqrt()) } else { full / 6.0 };
    let width0 = width0.max(full * 1e-3).max(f64::MIN_POSITIVE);

    let model = |p: &[f64]| {
        let (f, d, c, w) = (p[0], p[1], p[2], p[3]);
        let mut r = DVector::zeros(pts.len());
        let mut j = DMatrix::zeros(pts.len(), 4);
        for (i, &(t, y)) in pts.iter().enumerate() {
            let s = (t - c) / w;
            let g = (-s * s).exp();
            r[i] = f * (1.0 - d * g) - y;
            j[(i, 0)] = 1.0 - d * g;
            j[(i, 1)] = -f * g;
            j[(i, 2)] = -f * d * g * 2.0 * s / w;
            j[(i, 3)] = -f * d * g * 2.0 * s * s / w;
        }
        (r, j)
    };
    let res = levenberg_marquardt(
        &[floor0, depth0, center0, width0],
        LmOptions { max_iter: 500, ..LmOptions::default() },
        model,
    );
    let x = res.x;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("dip fit diverged".into()));
    }
    Ok(DipFit { floor: x[0], depth: x[1], center: x[2], width: x[3].abs(), residual: res.cost })
}
