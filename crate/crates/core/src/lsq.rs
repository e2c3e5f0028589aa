//! Small dense Levenberg-Marquardt solver for the tomography and dip fits.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOptions {
    pub max_iter: usize,
    /// Stop once a step changes the cost by less than this fraction.
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 200, rel_tol: 1e-15, abs_tol: 1e-30 }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LmResult {
    pub x: Vec<f64>,
    pub cost: f64,
}

/// Minimize `sum r(x)^2`. `model` returns the residual vector and its
/// Jacobian (rows = residuals, columns = parameters).
pub(crate) fn levenberg_marquardt<F>(x0: &[f64], opts: LmOptions, model: F) -> LmResult
where
    F: Fn(&[f64]) -> (DVector<f64>, DMatrix<f64>),
{
    let mut x = x0.to_vec();
    let (mut r, mut j) = model(&x);
    let mut cost = r.norm_squared();
    let p = x.len();
    if p == 0 {
        return LmResult { x, cost };
    }
    let mut lambda = 1e-3;
    for _ in 0..opts.max_iter {
        if cost <= opts.abs_tol {
            break;
        }
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..p {
                a[(d, d)] += lambda * (jtj[(d, d)].max(1e-12));
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let (tr, tj) = model(&trial);
            let tcost = tr.norm_squared();
            if tcost.is_finite() && tcost < cost {
                let gain = cost - tcost;
                x = trial;
                r = tr;
                j = tj;
                let converged = gain <= opts.rel_tol * cost || gain <= opts.abs_tol;
                cost = tcost;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if converged {
                    return LmResult { x, cost };
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            break;
        }
    }
    LmResult { x, cost }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_rosenbrock() {
        // r = (1 - x, 10 (y - x^2))
        let res = levenberg_marquardt(&[-1.2, 1.0], LmOptions::default(), |v| {
            let (x, y) = (v[0], v[1]);
            let r = DVector::from_vec(vec![1.0 - x, 10.0 * (y - x * x)]);
            let j = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -20.0 * x, 10.0]);
            (r, j)
        });
        assert!((res.x[0] - 1.0).abs() < 1e-8 && (res.x[1] - 1.0).abs() < 1e-8, "{:?}", res.x);
        assert!(res.cost < 1e-20);
    }

    #[test]
    fn linear_least_squares() {
        // overdetermined line fit y = 2x + 1 with exact data
        let xs = [0.0, 1.0, 2.0, 3.0];
        let res = levenberg_marquardt(&[0.0, 0.0], LmOptions::default(), |p| {
            let r = DVector::from_iterator(4, xs.iter().map(|x| p[0] * x + p[1] - (2.0 * x + 1.0)));
            let j = DMatrix::from_fn(4, 2, |i, c| if c == 0 { xs[i] } else { 1.0 });
            (r, j)
        });
        assert!((res.x[0] - 2.0).abs() < 1e-10 && (res.x[1] - 1.0).abs() < 1e-10);
    }
}
