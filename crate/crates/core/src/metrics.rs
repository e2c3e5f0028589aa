//! Cauchy-Schwarz violation, distribution similarity and beam-splitter
//! visibility bounds.

use nalgebra::DMatrix;

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};

/// `V_ij = (2/3) sqrt(G_ii G_jj) - G_ij`; positive entries witness
/// non-classical correlation. The diagonal is held at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationMatrix(DMatrix<f64>);

impl ViolationMatrix {
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

    /// Copy with every negative (non-violating) entry set to zero.
    pub fn positive_part(&self) -> Self {
        Self(self.0.map(|v| v.max(0.0)))
    }

    /// Largest off-diagonal entry and its (i, j), i < j.
    pub fn max_entry(&self) -> Option<(usize, usize, f64)> {
        let n = self.dim();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in i + 1..n {
                let v = self.0[(i, j)];
                if best.is_none_or(|b| v > b.2) {
                    best = Some((i, j, v));
                }
            }
        }
        best
    }
}

pub fn violation_matrix(gamma: &CorrelationMatrix) -> Result<ViolationMatrix> {
    let n = gamma.dim();
    let g = gamma.matrix();
    if let Some(v) = g.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::validation(format!("negative correlation entry {v}")));
    }
    let v = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            2.0 / 3.0 * (g[(i, i)] * g[(j, j)]).sqrt() - g[(i, j)]
        }
    });
    Ok(ViolationMatrix(v))
}

/// Overlap `(sum sqrt(a b))^2 / (sum a * sum b)` over unordered output pairs
/// (`i <= j`); 1 exactly when the two are proportional.
pub fn similarity(a: &CorrelationMatrix, b: &CorrelationMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "cannot compare {0}x{0} with {1}x{1} correlations",
            a.dim(),
            b.dim()
        )));
    }
    let n = a.dim();
    let (mut overlap, mut sa, mut sb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i..n {
            let (x, y) = (a.get(i, j), b.get(i, j));
            overlap += (x * y).sqrt();
            sa += x;
            sb += y;
        }
    }
    if !(sa > 0.0 && sb > 0.0) {
        return Err(Error::validation("similarity needs a positive entry in each matrix"));
    }
    Ok((overlap * overlap / (sa * sb)).min(1.0))
}

/// Highest HOM visibility reachable with perfectly indistinguishable photons
/// on a splitter of reflectivity `r`: `2 R T / (R^2 + T^2)`.
pub fn hom_max_visibility(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::param(format!("reflectivity must lie in (0, 1), got {r}")));
    }
    let t = 1.0 - r;
    Ok(2.0 * r * t / (r * r + t * t))
}
