use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Jitter scales tried, in units of `trace(P) / m`, when `P` is not
/// numerically positive definite.
pub const JITTER_STEPS: [f64; 5] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Lower-triangular factor `A` with `P + jitter * I = A A^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    pub lower: DMatrix<f64>,
    /// Diagonal jitter that had to be added (0 when none was needed).
    pub jitter: f64,
}

/// Cholesky factorization of a symmetric PSD matrix, adding escalating
/// diagonal jitter when the plain factorization fails.
pub fn cholesky_psd(p: &DMatrix<f64>) -> Result<CholeskyFactor> {
    check_dim("square matrix", p.nrows(), p.ncols())?;
    let m = p.nrows();
    let scale = p.amax();
    for i in 0..m {
        for j in 0..i {
            if (p[(i, j)] - p[(j, i)]).abs() > 1e-8 * scale {
                return Err(Error::Domain(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if m == 0 || scale == 0.0 {
        return Ok(CholeskyFactor {
            lower: DMatrix::zeros(m, m),
            jitter: 0.0,
        });
    }
    if let Some(c) = Cholesky::new(p.clone()) {
        return Ok(CholeskyFactor {
            lower: c.l(),
            jitter: 0.0,
        });
    }
    let unit = p.trace().abs().max(scale) / m as f64;
    for delta in JITTER_STEPS {
        let jitter = delta * unit;
        let mut q = p.clone();
        for i in 0..m {
            q[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(q) {
            return Ok(CholeskyFactor {
                lower: c.l(),
                jitter,
            });
        }
    }
    Err(Error::Decomposition {
        max_jitter: JITTER_STEPS[JITTER_STEPS.len() - 1] * unit,
    })
}

/// How the sigma-point spread `k` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spread {
    /// Fixed `k` (3 by default).
    Fixed(f64),
    /// `k = total - m`, e.g. the `m + k = 3` heuristic for Gaussian states.
    TotalEquals(f64),
}

impl Default for Spread {
    fn default() -> Self {
        Spread::Fixed(3.0)
    }
}

impl Spread {
    pub fn resolve(self, m: usize) -> f64 {
        match self {
            Spread::Fixed(k) => k,
            Spread::TotalEquals(total) => total - m as f64,
        }
    }
}

/// `2m + 1` weighted points with the mean and covariance of a Gaussian.
///
/// Points are ordered `[x_0, x_+1, ..., x_+m, x_-1, ..., x_-m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPointSet {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub spread: f64,
}

impl SigmaPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> DVector<f64> {
        let m = self.points[0].len();
        self.points
            .iter()
            .zip(&self.weights)
            .fold(DVector::zeros(m), |acc, (x, w)| acc + x * *w)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let m = mean.len();
        let mut cov = DMatrix::zeros(m, m);
        for (x, w) in self.points.iter().zip(&self.weights) {
            let d = x - &mean;
            cov.ger(*w, &d, &d, 1.0);
        }
        cov
    }
}

/// Sigma points around `mean` for covariance `A A^T`:
///
/// ```text
/// x_0  = a,                         w_0  = k / (m + k)
/// x_±i = a ± sqrt(m + k) * A[:, i], w_±i = 1 / (2 (m + k))
/// ```
///
/// The square root scales the whole column (the standard unscented
/// transform); it does not apply to the column entries one by one.
pub fn sigma_points(mean: &DVector<f64>, lower: &DMatrix<f64>, k: f64) -> Result<SigmaPointSet> {
    let m = mean.len();
    check_dim("factor rows", m, lower.nrows())?;
    check_dim("factor columns", m, lower.ncols())?;
    let total = m as f64 + k;
    if !(total > 0.0) {
        return Err(Error::Domain(format!("m + k = {total} must be positive")));
    }
    let scale = total.sqrt();
    let mut points = Vec::with_capacity(2 * m + 1);
    let mut weights = Vec::with_capacity(2 * m + 1);
    points.push(mean.clone());
    weights.push(k / total);
    let side = 1.0 / (2.0 * total);
    for sign in [1.0, -1.0] {
        for i in 0..m {
            points.push(mean + lower.column(i) * (sign * scale));
            weights.push(side);
        }
    }
    Ok(SigmaPointSet {
        points,
        weights,
        spread: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factor() {
        let f = cholesky_psd(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(f.lower, DMatrix::identity(3, 3));
        assert_eq!(f.jitter, 0.0);
    }

    #[test]
    fn hand_cholesky() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let f = cholesky_psd(&p).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2f64.sqrt()]);
        assert!((&f.lower - expected).amax() < 1e-15);
        assert!((&f.lower * f.lower.transpose() - p).amax() < 1e-14);
    }

    #[test]
    fn rank_deficient_needs_jitter() {
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let f = cholesky_psd(&p).unwrap();
        assert!(f.jitter > 0.0);
        assert!((&f.lower * f.lower.transpose() - p).amax() < 1e-8);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(cholesky_psd(&p), Err(Error::Decomposition { .. })));
    }

    #[test]
    fn zero_matrix_has_zero_factor() {
        let f = cholesky_psd(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(f.lower, DMatrix::zeros(3, 3));
    }

    #[test]
    fn weights_for_m2_k3() {
        let s = sigma_points(&DVector::zeros(2), &DMatrix::identity(2, 2), 3.0).unwrap();
        assert_eq!(s.len(), 5);
        assert!((s.weights[0] - 0.6).abs() < 1e-15);
        assert!(s.weights[1..].iter().all(|w| (w - 0.1).abs() < 1e-15));
    }

    #[test]
    fn scalar_points() {
        // m = 1, k = 2, P = 1: {0, ±sqrt(3)} with weights {2/3, 1/6, 1/6}
        let s = sigma_points(&DVector::zeros(1), &DMatrix::identity(1, 1), 2.0).unwrap();
        let xs: Vec<f64> = s.points.iter().map(|p| p[0]).collect();
        assert_eq!(xs[0], 0.0);
        assert!((xs[1] - 3f64.sqrt()).abs() < 1e-15);
        assert!((xs[2] + 3f64.sqrt()).abs() < 1e-15);
        assert!((s.weights[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.weights[1] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn non_positive_total_spread_rejected() {
        assert!(sigma_points(&DVector::zeros(2), &DMatrix::identity(2, 2), -2.0).is_err());
        assert_eq!(Spread::TotalEquals(3.0).resolve(47), -44.0);
    }
}
