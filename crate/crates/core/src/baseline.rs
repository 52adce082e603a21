//! Sliding-window non-negative least squares and OLS initialization.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};

use crate::error::{check_dim, Error, Result};
use crate::model::{ElementSpec, HeatRecord};

/// Relative KKT tolerance, in units of `‖X^T y‖∞`.
pub const KKT_TOLERANCE: f64 = 1e-8;
/// Ridge added to the Gram diagonal in windowed fits, relative to the mean
/// squared column norm.
pub const WINDOW_RIDGE: f64 = 1e-10;
/// Columns whose squared norm is below this share of the mean are flagged.
pub const UNIDENTIFIABLE_SHARE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub beta: DVector<f64>,
    /// Outer iterations of the active-set loop.
    pub iterations: usize,
    /// Largest KKT violation: `max(max_{P} |w_i|, max_{R} w_i)` with
    /// `w = X^T (y - X beta)`.
    pub kkt_violation: f64,
    /// Tolerance the violation was checked against.
    pub kkt_tolerance: f64,
}

/// Minimizes `‖X beta - y‖₂` subject to `beta >= 0`.
pub fn nnls_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<NnlsSolution> {
    if x.nrows() == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    check_dim("response length", x.nrows(), y.len())?;
    let g = x.transpose() * x;
    let b = x.transpose() * y;
    nnls_gram(&g, &b, None)
}

/// Active-set NNLS on the normal equations: minimizes
/// `beta^T G beta / 2 - b^T beta` over `beta >= 0`.
///
/// `warm` is a guess of the passive (positive) set, e.g. from the previous
/// window.
pub fn nnls_gram(
    g: &DMatrix<f64>,
    b: &DVector<f64>,
    warm: Option<&[bool]>,
) -> Result<NnlsSolution> {
    let n = b.len();
    check_dim("Gram rows", n, g.nrows())?;
    check_dim("Gram columns", n, g.ncols())?;
    let tol = KKT_TOLERANCE * b.amax();
    let max_iter = 30 * n.max(1) + 100;

    let mut passive = vec![false; n];
    let mut beta = DVector::zeros(n);
    if let Some(w) = warm {
        check_dim("warm start", n, w.len())?;
        passive.copy_from_slice(w);
        // shrink the guess until the restricted solution is strictly positive
        loop {
            if !passive.iter().any(|&p| p) {
                break;
            }
            let s = solve_passive(g, b, &passive)?;
            let mut dropped = false;
            for i in 0..n {
                if passive[i] && s[i] <= 0.0 {
                    passive[i] = false;
                    dropped = true;
                }
            }
            if !dropped {
                beta = s;
                break;
            }
        }
    }

    let mut blocked = vec![false; n];
    let mut iterations = 0;
    loop {
        let w = b - g * &beta;
        let candidate = (0..n)
            .filter(|&i| !passive[i] && !blocked[i] && w[i] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::SolverNonConvergence {
                iterations,
                kkt_violation: kkt_violation(&w, &passive),
            });
        }
        passive[j] = true;
        let before = beta.clone();
        loop {
            let s = solve_passive(g, b, &passive)?;
            if (0..n).all(|i| !passive[i] || s[i] > 0.0) {
                beta = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for i in 0..n {
                if passive[i] && s[i] <= 0.0 {
                    let d = beta[i] - s[i];
                    alpha = alpha.min(if d > 0.0 { beta[i] / d } else { 0.0 });
                }
            }
            for i in 0..n {
                if passive[i] {
                    beta[i] += alpha * (s[i] - beta[i]);
                    if beta[i] <= 0.0 || (s[i] <= 0.0 && beta[i] <= f64::EPSILON * before[i].abs())
                    {
                        beta[i] = 0.0;
                        passive[i] = false;
                    }
                } else {
                    beta[i] = 0.0;
                }
            }
        }
        // a column that cannot enter because of rounding is skipped until the
        // iterate moves again
        if beta == before {
            blocked[j] = true;
            passive[j] = false;
        } else {
            blocked.iter_mut().for_each(|b| *b = false);
        }
    }
    let w = b - g * &beta;
    Ok(NnlsSolution {
        kkt_violation: kkt_violation(&w, &passive),
        beta,
        iterations,
        kkt_tolerance: tol,
    })
}

fn kkt_violation(w: &DVector<f64>, passive: &[bool]) -> f64 {
    w.iter()
        .zip(passive)
        .map(|(&wi, &p)| if p { wi.abs() } else { wi.max(0.0) })
        .fold(0.0, f64::max)
}

/// Solves `G_PP s_P = b_P` with `s_R = 0`.
fn solve_passive(g: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> Result<DVector<f64>> {
    let idx: Vec<usize> = (0..b.len()).filter(|&i| passive[i]).collect();
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |r, c| g[(idx[r], idx[c])]);
    let rhs = DVector::from_fn(k, |r, _| b[idx[r]]);
    let sol = match Cholesky::new(sub.clone()) {
        Some(c) => c.solve(&rhs),
        None => SVD::new(sub, true, true)
            .solve(&rhs, f64::EPSILON * k as f64)
            .map_err(|e| Error::Numerical(format!("passive-set solve: {e}")))?,
    };
    let mut s = DVector::zeros(b.len());
    for (r, &i) in idx.iter().enumerate() {
        s[i] = sol[r];
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    /// Heats per window.
    pub window: usize,
    /// Usable rows (heats with `f_steel`) needed before a window is fitted.
    pub min_rows: usize,
    /// Partition coefficient treated as constant for slag elements.
    pub fixed_ell: f64,
    /// Fit every `stride`-th heat only.
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window: 2000,
            min_rows: 1,
            fixed_ell: 10.0,
            stride: 1,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::Config("window and stride must be at least 1".into()));
        }
        if self.min_rows > self.window {
            return Err(Error::Config(format!(
                "min_rows {} exceeds window {}",
                self.min_rows, self.window
            )));
        }
        if !self.fixed_ell.is_finite() {
            return Err(Error::Config("fixed_ell must be finite".into()));
        }
        Ok(())
    }
}

/// Response of the regression row for one heat, kg. `None` without `f_steel`.
///
/// Linear elements: `m_steel f_steel - m_hm f_hm`. Slag elements, with the
/// partition coefficient held at `ell`: `f_steel (m_steel + m_slag ell) - m_hm f_hm`.
pub fn regression_response(heat: &HeatRecord, element: &ElementSpec, ell: f64) -> Option<f64> {
    let f = heat.f_steel?;
    let carrier = if element.transfers_to_slag {
        heat.m_steel + heat.m_slag * ell
    } else {
        heat.m_steel
    };
    Some(f * carrier - heat.hot_metal_element_mass())
}

/// Steel fraction implied by scrap fractions `alpha` for a heat.
pub fn implied_steel_fraction(
    heat: &HeatRecord,
    alpha: &[f64],
    element: &ElementSpec,
    ell: f64,
) -> Option<f64> {
    let den = if element.transfers_to_slag {
        heat.m_steel + heat.m_slag * ell
    } else {
        heat.m_steel
    };
    (den > 0.0).then(|| (heat.scrap_element_mass(alpha) + heat.hot_metal_element_mass()) / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowEstimate {
    pub heat_index: u64,
    /// Position of the heat in the input sequence.
    pub position: usize,
    pub alpha: DVector<f64>,
    pub predicted_f_steel: Option<f64>,
    /// Columns with (numerically) no mass in the window.
    pub unidentifiable: Vec<bool>,
    pub rows: usize,
}

/// Running sums over a window of rows.
struct Accumulator {
    g: DMatrix<f64>,
    b: DVector<f64>,
    rows: usize,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self {
            g: DMatrix::zeros(n, n),
            b: DVector::zeros(n),
            rows: 0,
        }
    }

    fn add(&mut self, m: &DVector<f64>, y: f64, sign: f64) {
        self.g.ger(sign, m, m, 1.0);
        self.b.axpy(sign * y, m, 1.0);
        if sign > 0.0 {
            self.rows += 1;
        } else {
            self.rows -= 1;
        }
    }
}

/// Fits NNLS on the `window` heats before each heat `t >= window` and
/// predicts heat `t` from that fit.
pub fn windowed_nnls(
    heats: &[HeatRecord],
    element: &ElementSpec,
    cfg: &WindowConfig,
) -> Result<Vec<WindowEstimate>> {
    cfg.validate()?;
    let Some(first) = heats.first() else {
        return Ok(Vec::new());
    };
    let n = first.scrap_mass.len();
    for w in heats.windows(2) {
        if w[1].heat_index <= w[0].heat_index {
            return Err(Error::InvalidHeat {
                heat_index: w[1].heat_index,
                reason: "heats are not ordered by heat_index".into(),
            });
        }
    }
    let rows: Vec<Option<(DVector<f64>, f64)>> = heats
        .iter()
        .map(|h| {
            check_dim("scrap masses", n, h.scrap_mass.len())?;
            Ok(regression_response(h, element, cfg.fixed_ell)
                .map(|y| (DVector::from_column_slice(&h.scrap_mass), y)))
        })
        .collect::<Result<_>>()?;

    let mut acc = Accumulator::new(n);
    let mut out = Vec::new();
    let mut warm: Option<Vec<bool>> = None;
    for t in 0..heats.len() {
        if t >= cfg.window
            && (t - cfg.window).is_multiple_of(cfg.stride)
            && acc.rows >= cfg.min_rows
        {
            let est = fit_window(&acc, warm.as_deref())?;
            warm = Some(est.0.iter().map(|&v| v > 0.0).collect());
            let alpha = est.0;
            out.push(WindowEstimate {
                heat_index: heats[t].heat_index,
                position: t,
                predicted_f_steel: implied_steel_fraction(
                    &heats[t],
                    alpha.as_slice(),
                    element,
                    cfg.fixed_ell,
                ),
                alpha,
                unidentifiable: est.1,
                rows: acc.rows,
            });
        }
        // slide: add row t, drop row t - window; rebuild periodically to
        // bound the drift of the running sums
        if (t + 1) % (cfg.window * 4) == 0 {
            acc = Accumulator::new(n);
            for (m, y) in rows[(t + 1).saturating_sub(cfg.window)..=t]
                .iter()
                .flatten()
            {
                acc.add(m, *y, 1.0);
            }
        } else {
            if let Some((m, y)) = &rows[t] {
                acc.add(m, *y, 1.0);
            }
            if t >= cfg.window {
                if let Some((m, y)) = &rows[t - cfg.window] {
                    acc.add(m, *y, -1.0);
                }
            }
        }
    }
    Ok(out)
}

fn fit_window(acc: &Accumulator, warm: Option<&[bool]>) -> Result<(DVector<f64>, Vec<bool>)> {
    let n = acc.b.len();
    let mean_sq = (0..n).map(|i| acc.g[(i, i)]).sum::<f64>() / n as f64;
    let unidentifiable: Vec<bool> = (0..n)
        .map(|i| acc.g[(i, i)] <= UNIDENTIFIABLE_SHARE * mean_sq)
        .collect();
    let mut g = acc.g.clone();
    let ridge = WINDOW_RIDGE * mean_sq;
    for i in 0..n {
        g[(i, i)] += ridge;
    }
    let sol = nnls_gram(&g, &acc.b, warm)?;
    Ok((sol.beta, unidentifiable))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsInit {
    pub q: DVector<f64>,
    /// Components that were negative before clamping.
    pub clamped: Vec<usize>,
    pub rank: usize,
    pub warnings: Vec<String>,
}

/// Ordinary least squares on the usable heats, then `max(beta, floor)`.
///
/// A rank-deficient design gets the minimum-norm solution and a warning.
pub fn ols_init(
    heats: &[HeatRecord],
    element: &ElementSpec,
    fixed_ell: f64,
    floor: f64,
) -> Result<OlsInit> {
    let Some(first) = heats.first() else {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    };
    let n = first.scrap_mass.len();
    let mut data = Vec::new();
    let mut ys = Vec::new();
    for h in heats {
        check_dim("scrap masses", n, h.scrap_mass.len())?;
        if let Some(y) = regression_response(h, element, fixed_ell) {
            data.extend_from_slice(&h.scrap_mass);
            ys.push(y);
        }
    }
    if ys.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let x = DMatrix::from_row_slice(ys.len(), n, &data);
    let y = DVector::from_vec(ys);
    let svd = SVD::new(x, true, true);
    let smax = svd.singular_values.amax();
    let eps = smax * f64::EPSILON * (y.len().max(n)) as f64;
    let rank = svd.rank(eps);
    let beta = svd
        .solve(&y, eps)
        .map_err(|e| Error::Numerical(format!("least squares: {e}")))?;
    let mut warnings = Vec::new();
    if rank < n {
        warnings.push(format!(
            "design has rank {rank} < {n}; using the minimum-norm solution"
        ));
    }
    let clamped: Vec<usize> = (0..n).filter(|&i| beta[i] < 0.0).collect();
    let q = beta.map(|b| b.max(floor));
    Ok(OlsInit {
        q,
        clamped,
        rank,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat(i: u64, masses: Vec<f64>, alpha: &[f64]) -> HeatRecord {
        let mut h = HeatRecord {
            heat_index: i,
            scrap_mass: masses,
            m_hm: 2000.0,
            f_hm: 1e-4,
            m_steel: 5000.0,
            f_steel: None,
            m_slag: 400.0,
            f_feon_slag: Some(0.2),
        };
        h.f_steel = Some((h.scrap_element_mass(alpha) + h.hot_metal_element_mass()) / h.m_steel);
        h
    }

    fn masses(t: u64) -> Vec<f64> {
        let s = t as f64;
        vec![
            100.0 + 50.0 * (s * 0.7).sin().abs(),
            80.0 + 60.0 * (s * 1.3).cos().abs(),
            50.0 + 40.0 * (s * 0.3).sin().abs(),
        ]
    }

    #[test]
    fn identity_design_clamps() {
        let s = nnls_solve(
            &DMatrix::identity(2, 2),
            &DVector::from_vec(vec![3.0, -1.0]),
        )
        .unwrap();
        assert_eq!(s.beta, DVector::from_vec(vec![3.0, 0.0]));
    }

    #[test]
    fn nonnegative_least_squares_is_returned() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = nnls_solve(&x, &y).unwrap();
        assert!((s.beta[0] - 1.0).abs() < 1e-12 && (s.beta[1] - 2.0).abs() < 1e-12);
        assert!(s.kkt_violation <= s.kkt_tolerance);
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 2.0, 0.5, 0.3, 1.0, 2.0, 2.0, 0.1, 1.0, 1.0, 1.0, 1.0],
        );
        let y = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let g = x.transpose() * &x;
        let b = x.transpose() * &y;
        let cold = nnls_gram(&g, &b, None).unwrap();
        for warm in [
            [true, true, true],
            [false, true, false],
            [true, false, true],
        ] {
            let w = nnls_gram(&g, &b, Some(&warm)).unwrap();
            assert!((&w.beta - &cold.beta).amax() < 1e-12);
        }
    }

    #[test]
    fn windowed_recovers_constant_state() {
        let alpha = [2e-3, 5e-4, 1e-3];
        let heats: Vec<_> = (1..=60).map(|t| heat(t, masses(t), &alpha)).collect();
        let cfg = WindowConfig {
            window: 20,
            ..WindowConfig::default()
        };
        for element in [ElementSpec::linear("Cu"), ElementSpec::partitioning("Cr")] {
            let heats: Vec<_> = if element.transfers_to_slag {
                heats
                    .iter()
                    .map(|h| {
                        let mut h = h.clone();
                        let den = h.m_steel + h.m_slag * cfg.fixed_ell;
                        h.f_steel =
                            Some((h.scrap_element_mass(&alpha) + h.hot_metal_element_mass()) / den);
                        h
                    })
                    .collect()
            } else {
                heats.clone()
            };
            let est = windowed_nnls(&heats, &element, &cfg).unwrap();
            assert_eq!(est.len(), 40);
            assert_eq!(est[0].heat_index, 21);
            for e in &est {
                for (got, want) in e.alpha.iter().zip(alpha) {
                    assert!((got - want).abs() < 1e-8 * want, "{got} {want}");
                }
                let f = heats[e.position].f_steel.unwrap();
                assert!((e.predicted_f_steel.unwrap() - f).abs() < 1e-9 * f);
            }
        }
    }

    #[test]
    fn unused_scrap_is_flagged() {
        let alpha = [2e-3, 5e-4, 1e-3];
        let heats: Vec<_> = (1..=30)
            .map(|t| {
                let mut m = masses(t);
                m[1] = 0.0;
                heat(t, m, &alpha)
            })
            .collect();
        let cfg = WindowConfig {
            window: 10,
            ..WindowConfig::default()
        };
        let est = windowed_nnls(&heats, &ElementSpec::linear("Cu"), &cfg).unwrap();
        for e in &est {
            assert_eq!(e.unidentifiable, vec![false, true, false]);
            assert_eq!(e.alpha[1], 0.0);
            assert!(e.alpha.iter().all(|a| *a >= 0.0));
        }
    }

    #[test]
    fn stride_and_min_rows() {
        let alpha = [2e-3, 5e-4, 1e-3];
        let mut heats: Vec<_> = (1..=30).map(|t| heat(t, masses(t), &alpha)).collect();
        for h in heats.iter_mut().take(8) {
            h.f_steel = None;
        }
        let cfg = WindowConfig {
            window: 10,
            min_rows: 5,
            stride: 3,
            ..WindowConfig::default()
        };
        let est = windowed_nnls(&heats, &ElementSpec::linear("Cu"), &cfg).unwrap();
        // positions 10, 13, ...; the window before 10 has only 2 usable rows
        let pos: Vec<usize> = est.iter().map(|e| e.position).collect();
        assert_eq!(pos, vec![13, 16, 19, 22, 25, 28]);
    }

    #[test]
    fn ols_square_system_is_exact() {
        let alpha = [2e-3, 5e-4, 1e-3];
        let heats: Vec<_> = (1..=3).map(|t| heat(t, masses(t), &alpha)).collect();
        let init = ols_init(&heats, &ElementSpec::linear("Cu"), 10.0, 1e-7).unwrap();
        assert_eq!(init.rank, 3);
        for (got, want) in init.q.iter().zip(alpha) {
            assert!((got - want).abs() < 1e-10 * want);
        }
        assert!(init.warnings.is_empty());
    }

    #[test]
    fn ols_rank_deficient_warns_and_floors() {
        let alpha = [2e-3, 5e-4, 1e-3];
        let heats: Vec<_> = (1..=10)
            .map(|t| {
                let mut m = masses(t);
                m[2] = 0.0;
                heat(t, m, &alpha)
            })
            .collect();
        let init = ols_init(&heats, &ElementSpec::linear("Cu"), 10.0, 1e-7).unwrap();
        assert_eq!(init.rank, 2);
        assert_eq!(init.warnings.len(), 1);
        assert_eq!(init.q[2], 1e-7);
    }
}
