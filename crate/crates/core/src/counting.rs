//! Finite-statistics coincidence detection: multinomial pair sampling,
//! output loss with post-selection, bunching detection through a fiber
//! splitter, and Poissonian error propagation.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lattice::two_photon_basis;
use crate::metrics::violation_matrix;

/// Tolerance on the unordered-pair normalization of a sampled distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Integer coincidence counts per unordered output pair (0-based keys,
/// `i <= j`), with the acquisition metadata needed to correct them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub dim: usize,
    pub pairs: BTreeMap<(usize, usize), u64>,
    pub total_pairs_emitted: u64,
    pub bunching_split: f64,
    pub seed: u64,
}

impl CountRecord {
    pub fn total_counts(&self) -> u64 {
        self.pairs.values().sum()
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.pairs.get(&key).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation("count record has zero modes"));
        }
        for &(i, j) in self.pairs.keys() {
            if i > j || j >= self.dim {
                return Err(Error::validation(format!(
                    "invalid output pair ({}, {}) for {} modes",
                    i + 1,
                    j + 1,
                    self.dim
                )));
            }
        }
        if self.total_counts() > self.total_pairs_emitted {
            return Err(Error::validation(format!(
                "{} recorded coincidences exceed {} emitted pairs",
                self.total_counts(),
                self.total_pairs_emitted
            )));
        }
        check_split(self.bunching_split)
    }
}

/// Per-output detection efficiencies in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(efficiencies: Vec<f64>) -> Result<Self> {
        if efficiencies.is_empty() {
            return Err(Error::param("loss vector is empty"));
        }
        if let Some(e) = efficiencies.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(Error::param(format!("efficiency {e} outside (0, 1]")));
        }
        Ok(Self(efficiencies))
    }

    pub fn lossless(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn uniform(n: usize, efficiency: f64) -> Result<Self> {
        Self::new(vec![efficiency; n])
    }

    pub fn efficiencies(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_split(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("bunching splitter ratio must lie in (0, 1), got {s}")))
    }
}

/// Probability that a bunched pair entering the detection splitter exits
/// through both ports and fires two detectors.
pub fn bunching_detection_probability(split: f64) -> f64 {
    2.0 * split * (1.0 - split)
}

/// Sample `n_pairs` emitted pairs from `gamma`.
///
/// Pair counts are drawn as a multinomial (sequential conditional
/// binomials). Each cell is then thinned by the joint survival of both
/// photons, and bunched cells additionally by
/// [`bunching_detection_probability`]; the thinning is exact because every
/// event is kept or dropped independently.
pub fn sample_counts(
    gamma: &CorrelationMatrix,
    n_pairs: u64,
    loss: &LossVector,
    bunching_split: f64,
    seed: u64,
) -> Result<CountRecord> {
    let n = gamma.dim();
    if n_pairs == 0 {
        return Err(Error::param("n_pairs must be at least 1"));
    }
    if loss.len() != n {
        return Err(Error::Dimension(format!("{} efficiencies for {n} modes", loss.len())));
    }
    check_split(bunching_split)?;
    let total = gamma.total();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::validation(format!("correlation matrix sums to {total}, not 1")));
    }

    let eta = loss.efficiencies();
    let bunch_p = bunching_detection_probability(bunching_split);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = n_pairs;
    let mut mass = 1.0f64;
    let mut pairs = BTreeMap::new();
    for (i, j) in two_photon_basis(n) {
        let p = gamma.get(i, j);
        let emitted = if remaining == 0 || p <= 0.0 {
            0
        } else if p >= mass {
            remaining
        } else {
            draw_binomial(&mut rng, remaining, p / mass)?
        };
        remaining -= emitted;
        mass = (mass - p).max(0.0);

        let mut keep = eta[i] * eta[j];
        if i == j {
            keep *= bunch_p;
        }
        let detected = draw_binomial(&mut rng, emitted, keep)?;
        pairs.insert((i, j), detected);
    }
    Ok(CountRecord { dim: n, pairs, total_pairs_emitted: n_pairs, bunching_split, seed })
}

fn draw_binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> Result<u64> {
    if n == 0 || p <= 0.0 {
        return Ok(0);
    }
    if p >= 1.0 {
        return Ok(n);
    }
    Binomial::new(n, p)
        .map(|d| d.sample(rng))
        .map_err(|e| Error::Numerical(format!("binomial({n}, {p}): {e}")))
}

/// Independent acquisitions, one per seed.
pub fn sample_many(
    gamma: &CorrelationMatrix,
    n_pairs: u64,
    loss: &LossVector,
    bunching_split: f64,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<CountRecord>> {
    exec.map_slice(seeds, |&s| sample_counts(gamma, n_pairs, loss, bunching_split, s)).into_iter().collect()
}

/// Normalized correlation estimate and its first-order Poisson uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEstimate {
    pub gamma: CorrelationMatrix,
    pub sigma: DMatrix<f64>,
}

/// Point estimate `count * factor / sum(count * factor)` with
/// `sigma = sqrt(count) * factor / sum(count * factor)`.
///
/// `factor` undoes the bunching-detection probability on the diagonal when
/// `correct_bunching` is set and the joint output efficiency when
/// `correct_loss` is given. Covariance induced by the normalization is
/// ignored.
pub fn estimate_correlation(
    record: &CountRecord,
    correct_bunching: bool,
    correct_loss: Option<&LossVector>,
) -> Result<CorrelationEstimate> {
    record.validate()?;
    let n = record.dim;
    if let Some(l) = correct_loss {
        if l.len() != n {
            return Err(Error::Dimension(format!("{} efficiencies for {n} modes", l.len())));
        }
    }
    let bunch_p = bunching_detection_probability(record.bunching_split);
    let mut values = DMatrix::zeros(n, n);
    let mut sigma = DMatrix::zeros(n, n);
    let mut total = 0.0;
    for (i, j) in two_photon_basis(n) {
        let c = record.count(i, j) as f64;
        let mut f = 1.0;
        if i == j && correct_bunching {
            f /= bunch_p;
        }
        if let Some(l) = correct_loss {
            f /= l.efficiencies()[i] * l.efficiencies()[j];
        }
        values[(i, j)] = c * f;
        sigma[(i, j)] = c.sqrt() * f;
        total += c * f;
    }
    if !(total > 0.0) {
        return Err(Error::validation("count record has no coincidences"));
    }
    for i in 0..n {
        for j in i..n {
            let (v, s) = (values[(i, j)] / total, sigma[(i, j)] / total);
            values[(i, j)] = v;
            values[(j, i)] = v;
            sigma[(i, j)] = s;
            sigma[(j, i)] = s;
        }
    }
    Ok(CorrelationEstimate { gamma: CorrelationMatrix::new(values)?, sigma })
}

/// Violation values with their propagated uncertainty and significance.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationSignificance {
    pub value: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    /// `value / sigma` where `sigma > 0`, else 0.
    pub significance: DMatrix<f64>,
}

impl ViolationSignificance {
    /// Off-diagonal cell with the largest significance, as (i, j, V/sigma).
    pub fn max_significance(&self) -> Option<(usize, usize, f64)> {
        let n = self.value.nrows();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in i + 1..n {
                let s = self.significance[(i, j)];
                if best.is_none_or(|b| s > b.2) {
                    best = Some((i, j, s));
                }
            }
        }
        best
    }
}

/// Delta-method uncertainty of the violation matrix:
/// `dV/dG_ii = sqrt(G_jj / G_ii) / 3`, `dV/dG_ij = -1`.
///
/// When `G_ii` or `G_jj` is zero the square-root terms are dropped and
/// `sigma_V = sigma_ij`.
pub fn violation_significance(
    gamma_hat: &CorrelationMatrix,
    sigma: &DMatrix<f64>,
) -> Result<ViolationSignificance> {
    let n = gamma_hat.dim();
    if sigma.nrows() != n || sigma.ncols() != n {
        return Err(Error::Dimension(format!(
            "uncertainty is {}x{}, estimate is {n}x{n}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if sigma.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::validation("uncertainties must be non-negative"));
    }
    let v = violation_matrix(gamma_hat)?;
    let g = gamma_hat.matrix();
    let mut sv = DMatrix::zeros(n, n);
    let mut sig = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (gii, gjj) = (g[(i, i)], g[(j, j)]);
            let s = if gii > 0.0 && gjj > 0.0 {
                let di = (gjj / gii).sqrt() / 3.0 * sigma[(i, i)];
                let dj = (gii / gjj).sqrt() / 3.0 * sigma[(j, j)];
                (di * di + dj * dj + sigma[(i, j)].powi(2)).sqrt()
            } else {
                sigma[(i, j)]
            };
            sv[(i, j)] = s;
            let value = v.get(i, j);
            sig[(i, j)] = if s > 0.0 { value / s } else { 0.0 };
        }
    }
    Ok(ViolationSignificance { value: v.matrix().clone(), sigma: sv, significance: sig })
}
