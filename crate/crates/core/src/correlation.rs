//! Single-photon output distributions and two-photon correlation matrices.
//!
//! Correlations are probabilities over *unordered* output pairs: the matrix
//! is stored symmetric and `sum_{i <= j} gamma[(i, j)] = 1`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};
use crate::evolution::UnitaryMatrix;

/// Floating-point residue below zero tolerated before flooring.
pub const NEGATIVE_RESIDUE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SinglesDistribution {
    pub input_mode: usize,
    pub probabilities: Vec<f64>,
}

impl SinglesDistribution {
    /// Inverse participation ratio `sum p_k^2`.
    pub fn ipr(&self) -> f64 {
        self.probabilities.iter().map(|p| p * p).sum()
    }
}

/// `<n_k> = |U[k][input]|^2`.
pub fn singles_distribution(u: &UnitaryMatrix, input_mode: usize) -> Result<SinglesDistribution> {
    check_index(input_mode, u.dim())?;
    let probabilities = (0..u.dim()).map(|k| u.get(k, input_mode).norm_sqr()).collect();
    Ok(SinglesDistribution { input_mode, probabilities })
}

/// Two photons injected into distinct modes with wavepacket overlap
/// `indistinguishability` (1 identical, 0 fully distinguishable).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairInput {
    mode_i: usize,
    mode_j: usize,
    indistinguishability: f64,
}

impl PairInput {
    pub fn new(mode_i: usize, mode_j: usize, indistinguishability: f64) -> Result<Self> {
        if mode_i == mode_j {
            return Err(Error::param(format!("input modes must differ, both are {mode_i}")));
        }
        if !(0.0..=1.0).contains(&indistinguishability) {
            return Err(Error::param(format!(
                "indistinguishability must lie in [0, 1], got {indistinguishability}"
            )));
        }
        Ok(Self { mode_i, mode_j, indistinguishability })
    }

    pub fn identical(mode_i: usize, mode_j: usize) -> Result<Self> {
        Self::new(mode_i, mode_j, 1.0)
    }

    pub fn mode_i(&self) -> usize {
        self.mode_i
    }

    pub fn mode_j(&self) -> usize {
        self.mode_j
    }

    pub fn indistinguishability(&self) -> f64 {
        self.indistinguishability
    }

    pub fn with_indistinguishability(&self, mu: f64) -> Result<Self> {
        Self::new(self.mode_i, self.mode_j, mu)
    }

    fn check(&self, dim: usize) -> Result<()> {
        check_index(self.mode_i, dim)?;
        check_index(self.mode_j, dim)
    }
}

/// Symmetric non-negative distribution over unordered output pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(DMatrix<f64>);

impl CorrelationMatrix {
    /// Accepts any square, symmetric, non-negative matrix. Normalization is
    /// not enforced so that raw or rescaled distributions can be compared.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() || values.nrows() == 0 {
            return Err(Error::Dimension("correlation matrix must be square and non-empty".into()));
        }
        let n = values.nrows();
        for i in 0..n {
            for j in 0..n {
                let v = values[(i, j)];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::validation(format!(
                        "correlation entry ({}, {}) = {v} is not a non-negative number",
                        i + 1,
                        j + 1
                    )));
                }
                if v != values[(j, i)] {
                    return Err(Error::validation(format!(
                        "correlation matrix not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self(values))
    }

    /// Build from upper-triangle values, mirroring into the lower triangle.
    pub fn from_upper(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Sum over unordered pairs `i <= j`.
    pub fn total(&self) -> f64 {
        let n = self.dim();
        (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).map(|(i, j)| self.0[(i, j)]).sum()
    }

    /// Rescaled so that the unordered-pair sum is one.
    pub fn normalized(&self) -> Result<Self> {
        let t = self.total();
        if !(t > 0.0) {
            return Err(Error::Numerical("cannot normalize an all-zero correlation matrix".into()));
        }
        Ok(Self(&self.0 / t))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.0 * factor)
    }

    /// `(i, j, value)` for `i <= j` in basis order.
    pub fn upper_entries(&self) -> Vec<(usize, usize, f64)> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                out.push((i, j, self.0[(i, j)]));
            }
        }
        out
    }
}

/// Per-pair pieces of the two-photon probabilities: the distinguishable
/// (classical) part and the interference term.
struct PairTerms {
    classical: DMatrix<f64>,
    interference: DMatrix<f64>,
}

/// Interference decomposition for photons entering with output amplitude
/// columns `a` and `b`.
fn pair_terms(a: &[Complex64], b: &[Complex64]) -> PairTerms {
    let n = a.len();
    let mut classical = DMatrix::zeros(n, n);
    let mut interference = DMatrix::zeros(n, n);
    for k in 0..n {
        for l in k..n {
            let direct = a[k] * b[l];
            let exchange = b[k] * a[l];
            let w = if k == l { 0.5 } else { 1.0 };
            let c = w * (direct.norm_sqr() + exchange.norm_sqr());
            let x = w * 2.0 * (direct * exchange.conj()).re;
            classical[(k, l)] = c;
            classical[(l, k)] = c;
            interference[(k, l)] = x;
            interference[(l, k)] = x;
        }
    }
    PairTerms { classical, interference }
}

/// `classical + mu * interference`, with round-off below zero floored.
pub(crate) fn correlation_from_columns(
    a: &[Complex64],
    b: &[Complex64],
    mu: f64,
) -> Result<CorrelationMatrix> {
    let terms = pair_terms(a, b);
    let n = a.len();
    let mut m = terms.classical + terms.interference * mu;
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if v < -NEGATIVE_RESIDUE_TOL {
                return Err(Error::Numerical(format!(
                    "negative two-photon probability {v:e} at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
            if v < 0.0 {
                m[(i, j)] = 0.0;
            }
        }
    }
    CorrelationMatrix::new(m)
}

/// Indistinguishable photons:
/// `|U[k][i] U[l][j] + U[k][j] U[l][i]|^2 / (1 + delta_kl)`.
///
/// The pair's own indistinguishability is ignored.
pub fn quantum_correlation(u: &UnitaryMatrix, pair: &PairInput) -> Result<CorrelationMatrix> {
    pair.check(u.dim())?;
    correlation_from_columns(&u.column(pair.mode_i), &u.column(pair.mode_j), 1.0)
}

/// Distinguishable photons:
/// `(|U[k][i] U[l][j]|^2 + |U[k][j] U[l][i]|^2) / (1 + delta_kl)`.
pub fn classical_correlation(u: &UnitaryMatrix, pair: &PairInput) -> Result<CorrelationMatrix> {
    pair.check(u.dim())?;
    correlation_from_columns(&u.column(pair.mode_i), &u.column(pair.mode_j), 0.0)
}

/// Partially distinguishable photons: the classical distribution plus the
/// interference term weighted by the pair's indistinguishability.
pub fn partial_correlation(u: &UnitaryMatrix, pair: &PairInput) -> Result<CorrelationMatrix> {
    pair.check(u.dim())?;
    correlation_from_columns(&u.column(pair.mode_i), &u.column(pair.mode_j), pair.indistinguishability)
}

/// Coincidence probability at `output_pair` versus relative delay, with the
/// photon overlap falling off as `mu0 * exp(-(tau / coherence_time)^2)`.
pub fn hom_dip_curve(
    u: &UnitaryMatrix,
    pair: &PairInput,
    output_pair: (usize, usize),
    delays: &[f64],
    coherence_time: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(coherence_time > 0.0 && coherence_time.is_finite()) {
        return Err(Error::param(format!("coherence time must be positive, got {coherence_time}")));
    }
    pair.check(u.dim())?;
    check_index(output_pair.0, u.dim())?;
    check_index(output_pair.1, u.dim())?;
    let (k, l) = output_pair;
    let terms = pair_terms(&u.column(pair.mode_i), &u.column(pair.mode_j));
    let (c, x) = (terms.classical[(k, l)], terms.interference[(k, l)]);
    delays
        .iter()
        .map(|&tau| {
            if !tau.is_finite() {
                return Err(Error::param("delays must be finite"));
            }
            let mu = pair.indistinguishability * (-(tau / coherence_time).powi(2)).exp();
            Ok((tau, (c + mu * x).max(0.0)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::haar_unitary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn singles_identity_and_coupler() {
        let s = singles_distribution(&UnitaryMatrix::identity(4), 2).unwrap();
        assert_eq!(s.probabilities, vec![0.0, 0.0, 1.0, 0.0]);
        let s = singles_distribution(&UnitaryMatrix::balanced_coupler(), 0).unwrap();
        assert!(close(s.probabilities[0], 0.5, 1e-15) && close(s.probabilities[1], 0.5, 1e-15));
        assert!(matches!(
            singles_distribution(&UnitaryMatrix::identity(3), 3),
            Err(Error::Index { index: 3, dim: 3 })
        ));
    }

    #[test]
    fn coupler_hom_values() {
        let u = UnitaryMatrix::balanced_coupler();
        let pair = PairInput::identical(0, 1).unwrap();
        let q = quantum_correlation(&u, &pair).unwrap();
        let c = classical_correlation(&u, &pair).unwrap();
        assert!(close(q.get(0, 1), 0.0, 1e-15));
        assert!(close(q.get(0, 0), 0.5, 1e-15) && close(q.get(1, 1), 0.5, 1e-15));
        assert!(close(c.get(0, 1), 0.5, 1e-15));
        assert!(close(c.get(0, 0), 0.25, 1e-15) && close(c.get(1, 1), 0.25, 1e-15));
        let half = partial_correlation(&u, &pair.with_indistinguishability(0.5).unwrap()).unwrap();
        assert!(close(half.get(0, 1), 0.25, 1e-15));
        // bosonic bunching doubles the classical rate on a balanced splitter
        assert!(close(q.get(0, 0), 2.0 * c.get(0, 0), 1e-15));
    }

    #[test]
    fn identity_gives_single_coincidence() {
        let u = UnitaryMatrix::identity(3);
        let pair = PairInput::identical(0, 1).unwrap();
        for g in [quantum_correlation(&u, &pair).unwrap(), classical_correlation(&u, &pair).unwrap()] {
            assert_eq!(g.get(0, 1), 1.0);
            assert_eq!(g.total(), 1.0);
        }
    }

    #[test]
    fn partial_endpoints_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = haar_unitary(6, &mut rng);
        let pair = PairInput::new(1, 4, 1.0).unwrap();
        assert_eq!(partial_correlation(&u, &pair).unwrap(), quantum_correlation(&u, &pair).unwrap());
        let pair0 = pair.with_indistinguishability(0.0).unwrap();
        assert_eq!(partial_correlation(&u, &pair0).unwrap(), classical_correlation(&u, &pair0).unwrap());
    }

    #[test]
    fn pair_input_validation() {
        assert!(PairInput::new(2, 2, 1.0).is_err());
        assert!(PairInput::new(0, 1, 1.5).is_err());
        assert!(PairInput::new(0, 1, -0.1).is_err());
        let u = UnitaryMatrix::identity(2);
        assert!(quantum_correlation(&u, &PairInput::identical(0, 2).unwrap()).is_err());
    }

    #[test]
    fn dip_curve_shape() {
        let u = UnitaryMatrix::balanced_coupler();
        let pair = PairInput::identical(0, 1).unwrap();
        let delays = [-50.0, -1.0, 0.0, 1.0, 50.0];
        let curve = hom_dip_curve(&u, &pair, (0, 1), &delays, 1.0).unwrap();
        assert!(close(curve[2].1, 0.0, 1e-15));
        assert!(close(curve[0].1, 0.5, 1e-15) && close(curve[4].1, 0.5, 1e-15));
        assert_eq!(curve[1].1, curve[3].1);
        assert!(hom_dip_curve(&u, &pair, (0, 1), &delays, 0.0).is_err());

        let pair = PairInput::new(0, 1, 0.924).unwrap();
        let curve = hom_dip_curve(&u, &pair, (0, 1), &[0.0, 1e3], 1.0).unwrap();
        let visibility = (curve[1].1 - curve[0].1) / curve[1].1;
        assert!(close(visibility, 0.924, 1e-12));
    }
}
