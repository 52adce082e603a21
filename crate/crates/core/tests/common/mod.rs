//! Reference implementations used as independent oracles.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};

use scrapcomp::{HeatRecord, NoiseSpec};

/// Least squares restricted to `cols`, by SVD. `None` when the subproblem
/// is rank deficient.
fn restricted_lsq(x: &DMatrix<f64>, y: &DVector<f64>, cols: &[usize]) -> Option<DVector<f64>> {
    let sub = x.select_columns(cols);
    let svd = sub.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax.max(1e-300) {
        return None;
    }
    svd.solve(y, 0.0).ok()
}

/// Nonnegative least squares by enumerating every support set.
pub fn brute_force_nnls(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let n = x.ncols();
    let mut best = DVector::zeros(n);
    let mut best_res = y.norm_squared();
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let Some(b) = restricted_lsq(x, y, &cols) else {
            continue;
        };
        if b.iter().any(|v| *v < 0.0) {
            continue;
        }
        let mut full = DVector::zeros(n);
        for (k, &c) in cols.iter().enumerate() {
            full[c] = b[k];
        }
        let res = (x * &full - y).norm_squared();
        if res < best_res {
            best_res = res;
            best = full;
        }
    }
    best
}

/// Posterior of the last state given every observation, by conditioning
/// the joint Gaussian of states and observations in one batch.
///
/// Model: `alpha[t+1] = (1-g) alpha[t] + g eta`, `eta ~ (q, diag(Q))`,
/// `y[t] = m[t] . alpha[t] + eps`, `eps ~ (0, H)`. Heats with `None` are
/// not observed.
pub fn joint_gaussian_posterior(
    a1: &DVector<f64>,
    p1: &DMatrix<f64>,
    spec: &NoiseSpec,
    rows: &[DVector<f64>],
    ys: &[Option<f64>],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = a1.len();
    let t = rows.len();
    let g = spec.gamma;
    let big_q = DMatrix::from_diagonal(&spec.cov_diag);
    let mut means = vec![a1.clone()];
    let mut vars = vec![p1.clone()];
    for s in 1..t {
        means.push(&means[s - 1] * (1.0 - g) + &spec.mean * g);
        vars.push(&vars[s - 1] * (1.0 - g) * (1.0 - g) + &big_q * (g * g));
    }
    // Cov(alpha_s, alpha_u) = Var(alpha_s) (1-g)^(u-s) for s <= u
    let cross = |s: usize, u: usize| -> DMatrix<f64> {
        if s <= u {
            &vars[s] * (1.0 - g).powi((u - s) as i32)
        } else {
            &vars[u] * (1.0 - g).powi((s - u) as i32)
        }
    };
    let obs: Vec<usize> = (0..t).filter(|&s| ys[s].is_some()).collect();
    let last = t - 1;
    if obs.is_empty() {
        return (means[last].clone(), vars[last].clone());
    }
    let k = obs.len();
    let mut syy = DMatrix::zeros(k, k);
    let mut resid = DVector::zeros(k);
    let mut sxy = DMatrix::zeros(n, k);
    for (i, &s) in obs.iter().enumerate() {
        resid[i] = ys[s].unwrap() - rows[s].dot(&means[s]);
        for (j, &u) in obs.iter().enumerate() {
            syy[(i, j)] = (rows[s].transpose() * cross(s, u) * &rows[u])[(0, 0)];
        }
        syy[(i, i)] += spec.obs_var;
        sxy.set_column(i, &(cross(last, s) * &rows[s]));
    }
    let inv = syy
        .try_inverse()
        .expect("observation covariance is invertible");
    let gain = &sxy * inv;
    let mean = &means[last] + &gain * resid;
    let cov = &vars[last] - &gain * sxy.transpose();
    (mean, cov)
}

/// Random symmetric positive definite matrix of dimension `m`.
pub fn random_spd<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let b = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(m, m) * 1e-3
}

/// Largest element-wise difference scaled by the largest magnitude of `b`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.amax().max(1e-300);
    (a - b).amax() / scale
}

pub fn rel_diff_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

/// A linear-element heat with masses in plain units, for small exact tests.
pub fn plain_heat(index: u64, scrap_mass: Vec<f64>, y: Option<f64>) -> HeatRecord {
    let m_steel = scrap_mass.iter().sum::<f64>() + 1.0;
    HeatRecord {
        heat_index: index,
        scrap_mass,
        m_hm: 0.0,
        f_hm: 0.0,
        m_steel,
        f_steel: y.map(|y| y / m_steel),
        m_slag: 0.0,
        f_feon_slag: None,
    }
}

/// Sample mean and unbiased variance together with the standard errors
/// of both estimates.
pub struct SampleStats {
    pub mean: f64,
    pub var: f64,
    pub se_mean: f64,
    pub se_var: f64,
}

pub fn sample_stats(x: &[f64]) -> SampleStats {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    SampleStats {
        mean,
        var: m2 * n / (n - 1.0),
        se_mean: (m2 / n).sqrt(),
        se_var: ((m4 - m2 * m2) / n).sqrt(),
    }
}
