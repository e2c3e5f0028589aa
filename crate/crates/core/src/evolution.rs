//! Unitary propagation through coupled waveguides, `U(z) = exp(i C z)`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lattice::{hermitian_deviation, CouplingMatrix, Segment};

/// Relative Hermiticity tolerance accepted by [`evolve_unitary`].
pub const INPUT_HERMITIAN_TOL: f64 = 1e-9;

/// Tolerance on `max |U^H U - I|` for [`UnitaryMatrix::new`].
pub const UNITARY_TOL: f64 = 1e-10;

/// Mode transformation: column `j` holds the output amplitudes of a photon
/// injected into mode `j`, i.e. `entries[(out, in)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(DMatrix<Complex64>);

impl UnitaryMatrix {
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "unitary must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let u = Self(m);
        let err = u.unitarity_error();
        if err > UNITARY_TOL {
            return Err(Error::validation(format!("matrix not unitary (max |U^H U - I| = {err:e})")));
        }
        Ok(u)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// Balanced two-mode coupler `[[1, i], [i, 1]] / sqrt(2)`, the evolution of
    /// unit coupling over a length of pi/4.
    pub fn balanced_coupler() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self(DMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(a, 0.0), Complex64::new(0.0, a), Complex64::new(0.0, a), Complex64::new(a, 0.0)],
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    #[inline]
    pub fn get(&self, out: usize, input: usize) -> Complex64 {
        self.0[(out, input)]
    }

    /// Amplitudes of a photon injected into `input`.
    pub fn column(&self, input: usize) -> Vec<Complex64> {
        self.0.column(input).iter().copied().collect()
    }

    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim();
        let prod = self.0.adjoint() * &self.0;
        let mut err = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((prod[(i, j)] - target).norm());
            }
        }
        err
    }

    /// `D1 * U * D2` for diagonal phase matrices given by their phases.
    pub fn with_phase_gauge(&self, out_phases: &[f64], in_phases: &[f64]) -> Self {
        let m = DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            self.0[(i, j)] * Complex64::from_polar(1.0, out_phases[i] + in_phases[j])
        });
        Self(m)
    }
}

/// `exp(i c z)` by eigendecomposition of the (symmetrized) Hermitian matrix.
pub fn evolve_unitary(c: &CouplingMatrix, z: f64) -> Result<UnitaryMatrix> {
    expm_hermitian(c.matrix(), z)
}

pub(crate) fn expm_hermitian(h: &DMatrix<Complex64>, z: f64) -> Result<UnitaryMatrix> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::param(format!("propagation length must be non-negative, got {z}")));
    }
    let n = h.nrows();
    let scale = h.iter().fold(1.0f64, |acc, x| acc.max(x.norm()));
    let dev = hermitian_deviation(h);
    if dev > INPUT_HERMITIAN_TOL * scale {
        return Err(Error::validation(format!("coupling matrix not Hermitian (deviation {dev:e})")));
    }
    if z == 0.0 {
        return Ok(UnitaryMatrix::identity(n));
    }
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let v = &eig.eigenvectors;
    // V diag(exp(i lambda z)) V^H
    let mut scaled = v.clone();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, lambda * z);
        for r in 0..n {
            scaled[(r, k)] *= phase;
        }
    }
    let u = scaled * v.adjoint();
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite entries in evolution operator".into()));
    }
    Ok(UnitaryMatrix(u))
}

/// Ordered product `U_K ... U_2 U_1` of the per-segment evolutions, segment 1
/// being traversed first.
pub fn evolve_segments(segments: &[Segment]) -> Result<UnitaryMatrix> {
    let (first, rest) =
        segments.split_first().ok_or_else(|| Error::param("at least one segment is required"))?;
    let mut u = evolve_unitary(&first.coupling, first.length)?.0;
    for s in rest {
        if s.coupling.dim() != u.nrows() {
            return Err(Error::Dimension("segments have different mode counts".into()));
        }
        u = evolve_unitary(&s.coupling, s.length)?.0 * u;
    }
    Ok(UnitaryMatrix(u))
}

/// Haar-distributed random unitary (QR of a complex Gaussian matrix with the
/// phases of R's diagonal divided out).
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> UnitaryMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for k in 0..n {
        let d = r[(k, k)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, k)] *= ph;
        }
    }
    UnitaryMatrix(q)
}

/// Random Hermitian matrix with entries of magnitude at most `max_abs`.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, max_abs: f64, rng: &mut R) -> CouplingMatrix {
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex64::new(rng.random_range(-max_abs..=max_abs), 0.0);
        for j in i + 1..n {
            let r = max_abs * rng.random::<f64>().sqrt();
            let v = Complex64::from_polar(r, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    CouplingMatrix::new(m).expect("constructed Hermitian")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_coupling_matrix, LatticeGeometry};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, SQRT_2};

    #[test]
    fn zero_length_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_hermitian(5, 2.0, &mut rng);
        assert_eq!(evolve_unitary(&c, 0.0).unwrap(), UnitaryMatrix::identity(5));
    }

    #[test]
    fn coupler_quarter_period_is_balanced() {
        let c = CouplingMatrix::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let u = evolve_unitary(&c, FRAC_PI_4).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((u.get(i, j).norm() - FRAC_1_SQRT_2).abs() < 1e-14);
        }
        assert!(u.get(0, 1).re.abs() < 1e-14);
        assert!((u.get(0, 1).im - FRAC_1_SQRT_2).abs() < 1e-14);
        assert!((u.get(1, 0) - u.get(0, 1)).norm() < 1e-14);
        let diff = u.matrix() - UnitaryMatrix::balanced_coupler().matrix();
        assert!(diff.iter().all(|x| x.norm() < 1e-14));
    }

    #[test]
    fn three_site_chain_transfers_perfectly() {
        let g = LatticeGeometry::chain(3, 1.0).unwrap();
        // tiny d0 suppresses the next-nearest coupling below double precision
        let c = build_coupling_matrix(&g, 1.0, 1e-3, 0.0).unwrap();
        let u = evolve_unitary(&c, std::f64::consts::PI / SQRT_2).unwrap();
        assert!((u.get(2, 0) - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        assert!((u.get(0, 2) - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        assert!((u.get(1, 1).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian_and_negative_length() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        );
        assert!(matches!(expm_hermitian(&m, 1.0), Err(Error::Validation(_))));
        let c = CouplingMatrix::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(evolve_unitary(&c, -1.0).is_err());
    }

    #[test]
    fn segments_compose_in_propagation_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_hermitian(4, 1.0, &mut rng);
        let b = random_hermitian(4, 1.0, &mut rng);
        let u = evolve_segments(&[
            Segment { coupling: a.clone(), length: 0.7 },
            Segment { coupling: b.clone(), length: 0.4 },
        ])
        .unwrap();
        let expected = evolve_unitary(&b, 0.4).unwrap().0 * evolve_unitary(&a, 0.7).unwrap().0;
        assert!((u.matrix() - expected).iter().all(|x| x.norm() < 1e-13));
        assert!(evolve_segments(&[]).is_err());
    }

    #[test]
    fn haar_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 2, 9, 20] {
            assert!(haar_unitary(n, &mut rng).unitarity_error() < 1e-12);
        }
    }
}
