//! Waveguide lattice geometry, coupling matrices and engineered disorder.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum tolerated |C - C^H| entry.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Chain,
    Grid2d,
    Explicit,
}

/// Transverse arrangement of the waveguides.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGeometry {
    kind: GeometryKind,
    rows: usize,
    cols: usize,
    positions: Vec<[f64; 2]>,
    spacing: f64,
}

impl LatticeGeometry {
    /// `n` waveguides on a line.
    pub fn chain(n: usize, spacing: f64) -> Result<Self> {
        let positions = (0..n).map(|k| [k as f64 * spacing, 0.0]).collect();
        Self::checked(GeometryKind::Chain, 1, n, positions, spacing)
    }

    /// Square grid, sites numbered row-major.
    pub fn grid(rows: usize, cols: usize, spacing: f64) -> Result<Self> {
        let mut positions = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                positions.push([c as f64 * spacing, r as f64 * spacing]);
            }
        }
        Self::checked(GeometryKind::Grid2d, rows, cols, positions, spacing)
    }

    /// Arbitrary site positions; `spacing` is the reference distance at which
    /// the coupling equals `c0`.
    pub fn explicit(positions: Vec<[f64; 2]>, spacing: f64) -> Result<Self> {
        let n = positions.len();
        Self::checked(GeometryKind::Explicit, 1, n, positions, spacing)
    }

    fn checked(
        kind: GeometryKind,
        rows: usize,
        cols: usize,
        positions: Vec<[f64; 2]>,
        spacing: f64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || positions.is_empty() {
            return Err(Error::Geometry("lattice must have at least one site".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Geometry(format!("spacing must be positive, got {spacing}")));
        }
        if kind != GeometryKind::Explicit && rows * cols != positions.len() {
            return Err(Error::Geometry(format!(
                "{rows}x{cols} does not match {} positions",
                positions.len()
            )));
        }
        if positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Geometry("non-finite site coordinate".into()));
        }
        for a in 0..positions.len() {
            for b in a + 1..positions.len() {
                if positions[a] == positions[b] {
                    return Err(Error::Geometry(format!(
                        "sites {} and {} share position {:?}",
                        a + 1,
                        b + 1,
                        positions[a]
                    )));
                }
            }
        }
        Ok(Self { kind, rows, cols, positions, spacing })
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn n_sites(&self) -> usize {
        self.positions.len()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.positions[a], self.positions[b]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    }
}

/// Hermitian coupling matrix: propagation constants on the diagonal and
/// inter-waveguide coupling strengths off it (rad per unit length).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix(DMatrix<Complex64>);

impl CouplingMatrix {
    /// Wraps `m` after checking it is square and Hermitian within
    /// [`HERMITIAN_TOL`].
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "coupling matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let dev = hermitian_deviation(&m);
        if dev > HERMITIAN_TOL {
            return Err(Error::validation(format!("coupling matrix not Hermitian (max deviation {dev:e})")));
        }
        Ok(Self(m))
    }

    /// Real symmetric coupling matrix from row-major entries.
    pub fn from_real(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Dimension(format!("expected {} entries, got {}", n * n, entries.len())));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| Complex64::new(entries[i * n + j], 0.0)))
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

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.0)
    }
}

pub(crate) fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Coupling matrix with exponential distance decay,
/// `C_ij = c0 * exp(-(d_ij - spacing) / d0)` off the diagonal and `beta` on it.
///
/// Every pair of sites couples; nothing is truncated to zero.
pub fn build_coupling_matrix(
    geometry: &LatticeGeometry,
    c0: f64,
    d0: f64,
    beta: f64,
) -> Result<CouplingMatrix> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::param(format!("c0 must be positive, got {c0}")));
    }
    if !(d0 > 0.0 && d0.is_finite()) {
        return Err(Error::param(format!("d0 must be positive, got {d0}")));
    }
    if !beta.is_finite() {
        return Err(Error::param("beta must be finite"));
    }
    let n = geometry.n_sites();
    let s = geometry.spacing();
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(beta, 0.0)
        } else {
            Complex64::new(c0 * (-(geometry.distance(i, j) - s) / d0).exp(), 0.0)
        }
    });
    Ok(CouplingMatrix(m))
}

/// Piecewise-constant disorder: the propagation length is cut into
/// `segments` pieces, each with its own jittered couplings and length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSpec {
    pub seed: u64,
    /// Relative half-width of the multiplicative uniform jitter on each
    /// off-diagonal coupling, in `[0, 1)`.
    pub edge_jitter: f64,
    pub segments: usize,
    /// Relative half-width of the uniform jitter on each segment length, in `[0, 1)`.
    pub segment_length_jitter: f64,
    /// Optional additive uniform jitter half-width on the propagation
    /// constants (rad per unit length). Zero leaves the diagonal untouched.
    #[serde(default)]
    pub diagonal_jitter: f64,
}

impl DisorderSpec {
    pub fn new(seed: u64, edge_jitter: f64, segments: usize, segment_length_jitter: f64) -> Self {
        Self { seed, edge_jitter, segments, segment_length_jitter, diagonal_jitter: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.edge_jitter) {
            return Err(Error::param(format!("edge_jitter must lie in [0, 1), got {}", self.edge_jitter)));
        }
        if !(0.0..1.0).contains(&self.segment_length_jitter) {
            return Err(Error::param(format!(
                "segment_length_jitter must lie in [0, 1), got {}",
                self.segment_length_jitter
            )));
        }
        if self.segments == 0 {
            return Err(Error::param("segments must be at least 1"));
        }
        if !(self.diagonal_jitter >= 0.0 && self.diagonal_jitter.is_finite()) {
            return Err(Error::param("diagonal_jitter must be non-negative"));
        }
        Ok(())
    }
}

/// One piece of a segmented propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub coupling: CouplingMatrix,
    pub length: f64,
}

/// Split a propagation of `total_length` into disordered segments.
///
/// Each segment is `total_length / K` scaled by a draw from
/// `[1 - segment_length_jitter, 1 + segment_length_jitter]`; each coupling
/// `C_ij` (i < j) is scaled by an independent draw from
/// `[1 - edge_jitter, 1 + edge_jitter]` and mirrored into `C_ji`.
pub fn apply_disorder(c: &CouplingMatrix, spec: &DisorderSpec, total_length: f64) -> Result<Vec<Segment>> {
    spec.validate()?;
    if !(total_length > 0.0 && total_length.is_finite()) {
        return Err(Error::param(format!("total length must be positive, got {total_length}")));
    }
    let n = c.dim();
    let base = total_length / spec.segments as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.segments);
    for _ in 0..spec.segments {
        let length = base * jitter(&mut rng, spec.segment_length_jitter);
        let mut m = c.matrix().clone();
        for i in 0..n {
            for j in i + 1..n {
                let f = jitter(&mut rng, spec.edge_jitter);
                let v = c.get(i, j) * f;
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        if spec.diagonal_jitter > 0.0 {
            for i in 0..n {
                let d = spec.diagonal_jitter * rng.random_range(-1.0..=1.0);
                m[(i, i)] += Complex64::new(d, 0.0);
            }
        }
        out.push(Segment { coupling: CouplingMatrix(m), length });
    }
    Ok(out)
}

fn jitter(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    let u: f64 = rng.random_range(-1.0..=1.0);
    1.0 + half_width * u
}

/// Unordered two-photon output configurations `(i, j)`, `i <= j`, in
/// lexicographic order (0-based).
pub fn two_photon_basis(n_sites: usize) -> Vec<(usize, usize)> {
    let mut basis = Vec::with_capacity(n_sites * (n_sites + 1) / 2);
    for i in 0..n_sites {
        for j in i..n_sites {
            basis.push((i, j));
        }
    }
    basis
}

/// Position of `(i, j)` (either order) in [`two_photon_basis`].
pub fn pair_index(n_sites: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // rows before `i` hold n, n-1, ..., n-i+1 entries
    i * n_sites - i * i.saturating_sub(1) / 2 + (j - i)
}
