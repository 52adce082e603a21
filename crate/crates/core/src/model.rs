//! Domain types and closed-form moment relations of the composition model.
//!
//! The state of the model is the vector of element fractions, one per scrap
//! type. Between heats it evolves as a convex combination
//!
//! ```text
//! alpha[t+1] = (1 - gamma) * alpha[t] + gamma * eta[t],   eta[t] ~ D(q, Q)
//! ```
//!
//! which keeps every fraction inside `[0, 1]` as long as `eta` is supported
//! there, and makes the mean relax toward `q` with a bounded stationary
//! variance `gamma / (2 - gamma) * Q`. (A plain random walk would let the
//! variance grow without bound.)
//!
//! Internally all masses are kilograms and all fractions are dimensionless.
//! Conversions to ppm, grams and tonnes happen only at reporting boundaries.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// One part per million, as a fraction.
pub const PPM: f64 = 1e-6;
pub const KG_PER_TONNE: f64 = 1000.0;
pub const G_PER_KG: f64 = 1000.0;

/// Converts a dimensionless fraction to ppm.
#[inline]
pub fn to_ppm(fraction: f64) -> f64 {
    fraction * 1e6
}

/// Converts ppm to a dimensionless fraction.
#[inline]
pub fn from_ppm(ppm: f64) -> f64 {
    ppm / 1e6
}

/// A chemical element and the observation model it calls for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementSpec {
    pub id: String,
    /// `false`: the element stays in the steel and the observation is linear
    /// in the state. `true`: the element partitions into the slag and the
    /// observation is non-linear in the augmented state.
    pub transfers_to_slag: bool,
}

impl ElementSpec {
    pub fn linear(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            transfers_to_slag: false,
        }
    }

    pub fn partitioning(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            transfers_to_slag: true,
        }
    }

    /// Known elements: Cu and Ni stay in the steel, Cr and S go to the slag.
    pub fn from_symbol(id: &str) -> Result<Self> {
        match id {
            "Cu" | "Ni" => Ok(Self::linear(id)),
            "Cr" | "S" => Ok(Self::partitioning(id)),
            other => Err(Error::Config(format!(
                "unknown element {other:?}; give transfers_to_slag explicitly"
            ))),
        }
    }
}

/// Ordered set of scrap types. The order is the index order of every
/// per-scrap vector in the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrapCatalog {
    ids: Vec<String>,
    display_names: Option<Vec<String>>,
}

impl ScrapCatalog {
    pub fn new(ids: Vec<String>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Domain("scrap catalog must not be empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Domain(format!("duplicate scrap id {id:?}")));
            }
        }
        Ok(Self {
            ids,
            display_names: None,
        })
    }

    /// Catalog with ids `01`, `02`, ... `n`.
    pub fn numbered(n: usize) -> Result<Self> {
        let width = n.to_string().len().max(2);
        Self::new((1..=n).map(|i| format!("{i:0width$}")).collect())
    }

    pub fn with_display_names(mut self, names: Vec<String>) -> Result<Self> {
        check_dim("display names", self.ids.len(), names.len())?;
        self.display_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn display_name(&self, index: usize) -> &str {
        self.display_names
            .as_ref()
            .map(|n| n[index].as_str())
            .unwrap_or(&self.ids[index])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }
}

/// Production record of one heat, for one element.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatRecord {
    pub heat_index: u64,
    /// Charged mass per scrap type, kg.
    pub scrap_mass: Vec<f64>,
    /// Hot-metal mass, kg (0 for an electric arc furnace).
    pub m_hm: f64,
    /// Element fraction in the hot metal.
    pub f_hm: f64,
    /// Tapped steel mass, kg.
    pub m_steel: f64,
    /// Measured element fraction in the steel; `None` for heats to predict only.
    pub f_steel: Option<f64>,
    /// Slag mass, kg.
    pub m_slag: f64,
    /// Fraction of iron oxides in the slag. Only needed for partitioning elements.
    pub f_feon_slag: Option<f64>,
}

impl HeatRecord {
    /// Checks the record invariants against a catalog of `n_scrap` types.
    pub fn validate(&self, n_scrap: usize) -> Result<()> {
        let bad = |reason: String| Error::InvalidHeat {
            heat_index: self.heat_index,
            reason,
        };
        if self.scrap_mass.len() != n_scrap {
            return Err(bad(format!(
                "expected {n_scrap} scrap masses, got {}",
                self.scrap_mass.len()
            )));
        }
        for (i, &m) in self.scrap_mass.iter().enumerate() {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(bad(format!("scrap mass {i} is {m}")));
            }
        }
        for (name, m) in [
            ("m_hm", self.m_hm),
            ("m_steel", self.m_steel),
            ("m_slag", self.m_slag),
        ] {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(bad(format!("{name} is {m}")));
            }
        }
        let fractions = [
            ("f_hm", Some(self.f_hm)),
            ("f_steel", self.f_steel),
            ("f_feon_slag", self.f_feon_slag),
        ];
        for (name, f) in fractions {
            if let Some(f) = f {
                if !(0.0..=1.0).contains(&f) {
                    return Err(bad(format!("{name} = {f} outside [0, 1]")));
                }
            }
        }
        if self.f_steel.is_some() && self.m_steel <= 0.0 {
            return Err(bad(
                "m_steel must be positive when f_steel is present".into()
            ));
        }
        Ok(())
    }

    /// Element mass charged through scrap, `m_t . alpha`, kg.
    pub fn scrap_element_mass(&self, alpha: &[f64]) -> f64 {
        self.scrap_mass.iter().zip(alpha).map(|(m, a)| m * a).sum()
    }

    /// Element mass charged through hot metal, kg.
    pub fn hot_metal_element_mass(&self) -> f64 {
        self.m_hm * self.f_hm
    }

    /// Observation of the linear model: element mass attributed to scrap,
    /// `m_steel * f_steel - m_hm * f_hm`.
    pub fn linear_observation(&self) -> Option<f64> {
        self.f_steel
            .map(|f| self.m_steel * f - self.hot_metal_element_mass())
    }

    /// Observation of the partitioning model: element mass in the steel.
    pub fn steel_element_mass(&self) -> Option<f64> {
        self.f_steel.map(|f| self.m_steel * f)
    }

    pub fn total_scrap_mass(&self) -> f64 {
        self.scrap_mass.iter().sum()
    }
}

/// Mean and covariance of the (possibly augmented) state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim("covariance rows", mean.len(), cov.nrows())?;
        check_dim("covariance columns", mean.len(), cov.ncols())?;
        Ok(Self { mean, cov })
    }

    pub fn from_diagonal(mean: DVector<f64>, var: &DVector<f64>) -> Result<Self> {
        check_dim("variance vector", mean.len(), var.len())?;
        Ok(Self {
            cov: DMatrix::from_diagonal(var),
            mean,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }

    /// `P <- (P + P^T) / 2`.
    pub fn symmetrize(&mut self) {
        symmetrize(&mut self.cov);
    }

    /// Symmetric to 1e-12 relative and PSD (smallest eigenvalue at least
    /// `-1e-10 * trace`).
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.dim();
        let scale = self.cov.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                let d = (self.cov[(i, j)] - self.cov[(j, i)]).abs();
                if d > 1e-12 * scale {
                    return Err(Error::Numerical(format!(
                        "covariance asymmetric at ({i}, {j}): {d:e}"
                    )));
                }
            }
        }
        let trace = self.cov.trace();
        let min_eig = self
            .cov
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if n > 0 && min_eig < -1e-10 * trace.abs() {
            return Err(Error::Numerical(format!(
                "covariance not PSD: smallest eigenvalue {min_eig:e}, trace {trace:e}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Process noise of the partition parameters `[c1, c2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionNoise {
    pub mean: DVector<f64>,
    pub cov_diag: DVector<f64>,
}

/// Hyperparameters of the state-space model.
///
/// `cov_diag` is the diagonal of the process-noise covariance `Q`; the model
/// only admits uncorrelated scrap types, so `Q` is stored as a vector.
/// `obs_var` is the observation variance `H` in kg².
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub gamma: f64,
    pub mean: DVector<f64>,
    pub cov_diag: DVector<f64>,
    pub obs_var: f64,
    pub partition: Option<PartitionNoise>,
}

impl NoiseSpec {
    pub fn new(
        gamma: f64,
        mean: DVector<f64>,
        cov_diag: DVector<f64>,
        obs_var: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Domain(format!("gamma = {gamma} outside [0, 1]")));
        }
        check_dim("process-noise covariance", mean.len(), cov_diag.len())?;
        check_nonneg("Q", &cov_diag)?;
        if !(obs_var >= 0.0 && obs_var.is_finite()) {
            return Err(Error::Domain(format!("observation variance H = {obs_var}")));
        }
        Ok(Self {
            gamma,
            mean,
            cov_diag,
            obs_var,
            partition: None,
        })
    }

    /// Like [`NoiseSpec::new`] but takes a full matrix and rejects any
    /// off-diagonal entry.
    pub fn from_matrix(
        gamma: f64,
        mean: DVector<f64>,
        cov: &DMatrix<f64>,
        obs_var: f64,
    ) -> Result<Self> {
        Self::new(gamma, mean, diagonal_of(cov, "Q")?, obs_var)
    }

    pub fn with_partition(mut self, mean: DVector<f64>, cov_diag: DVector<f64>) -> Result<Self> {
        check_dim("partition mean", 2, mean.len())?;
        check_dim("partition covariance", 2, cov_diag.len())?;
        check_nonneg("Q_c", &cov_diag)?;
        self.partition = Some(PartitionNoise { mean, cov_diag });
        Ok(self)
    }

    pub fn n_scrap(&self) -> usize {
        self.mean.len()
    }

    /// Dimension of the filter state: `N_s`, or `N_s + 2` when augmented.
    pub fn state_dim(&self) -> usize {
        self.n_scrap() + self.partition.as_ref().map_or(0, |p| p.mean.len())
    }

    /// `[q, q_c]` (or just `q`).
    pub fn augmented_mean(&self) -> DVector<f64> {
        match &self.partition {
            None => self.mean.clone(),
            Some(p) => concat(&self.mean, &p.mean),
        }
    }

    /// Diagonal of `blockdiag(Q, Q_c)` (or just `Q`).
    pub fn augmented_cov_diag(&self) -> DVector<f64> {
        match &self.partition {
            None => self.cov_diag.clone(),
            Some(p) => concat(&self.cov_diag, &p.cov_diag),
        }
    }

    /// Diagonal of the stationary covariance of the augmented state.
    pub fn stationary_cov_diag(&self) -> Result<DVector<f64>> {
        stationary_covariance(self.gamma, &self.augmented_cov_diag())
    }

    /// Beta parameters per scrap type; fails on the first infeasible index.
    pub fn beta_params(&self) -> Result<Vec<BetaParams>> {
        self.mean
            .iter()
            .zip(self.cov_diag.iter())
            .enumerate()
            .map(|(i, (&q, &v))| {
                beta_params_from_moments(q, v).map_err(|e| match e {
                    Error::MomentMatching { mean, variance, .. } => Error::MomentMatching {
                        index: i,
                        mean,
                        variance,
                    },
                    other => other,
                })
            })
            .collect()
    }

    /// Default initial belief: `a_1 = [q, q_c]`, `P_1 = blockdiag(Q, Q_c)`.
    pub fn default_initial_belief(&self) -> GaussianBelief {
        GaussianBelief {
            mean: self.augmented_mean(),
            cov: DMatrix::from_diagonal(&self.augmented_cov_diag()),
        }
    }
}

fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

fn check_nonneg(name: &str, v: &DVector<f64>) -> Result<()> {
    match v.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
        Some(i) => Err(Error::Domain(format!(
            "{name}[{i}] = {} must be finite and >= 0",
            v[i]
        ))),
        None => Ok(()),
    }
}

/// Extracts the diagonal of a square matrix, rejecting non-zero off-diagonals.
pub fn diagonal_of(m: &DMatrix<f64>, name: &str) -> Result<DVector<f64>> {
    check_dim("square matrix", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] != 0.0 {
                return Err(Error::Domain(format!(
                    "{name} must be diagonal; entry ({i}, {j}) = {}",
                    m[(i, j)]
                )));
            }
        }
    }
    Ok(m.diagonal())
}

/// Affine partition coefficient `ell(f) = c1 + c2 * f`, the ratio of the
/// element fraction in slag to the fraction in steel, as a function of the
/// iron-oxide fraction of the slag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionModel {
    pub c1: f64,
    pub c2: f64,
}

impl PartitionModel {
    pub fn new(c1: f64, c2: f64) -> Self {
        Self { c1, c2 }
    }

    pub fn ell(&self, f_feon: f64) -> f64 {
        self.c1 + self.c2 * f_feon
    }

    /// `ell(f)`, required to be non-negative.
    pub fn checked_ell(&self, f_feon: f64) -> Result<f64> {
        let ell = self.ell(f_feon);
        if ell >= 0.0 {
            Ok(ell)
        } else {
            Err(Error::Domain(format!(
                "partition coefficient {ell} < 0 (c1 = {}, c2 = {}, f_feon = {f_feon})",
                self.c1, self.c2
            )))
        }
    }
}

/// `gamma = ln 2 / h` for a state half-life of `h` heats.
///
/// The exact discrete half-life would be `1 - 2^(-1/h)`; the two differ by
/// `O(gamma^2)`.
pub fn gamma_from_half_life(half_life: f64) -> Result<f64> {
    if half_life > 0.0 {
        Ok(std::f64::consts::LN_2 / half_life)
    } else {
        Err(Error::Domain(format!(
            "half-life must be positive, got {half_life}"
        )))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("gamma = {gamma} outside (0, 1]")))
    }
}

/// `P_inf = gamma / (2 - gamma) * Q`, elementwise on the diagonal.
pub fn stationary_covariance(gamma: f64, q_cov_diag: &DVector<f64>) -> Result<DVector<f64>> {
    check_gamma(gamma)?;
    Ok(q_cov_diag * (gamma / (2.0 - gamma)))
}

/// `Q = (2 - gamma) / gamma * P_inf`, the inverse of [`stationary_covariance`].
pub fn process_noise_from_stationary(
    gamma: f64,
    p_inf_diag: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_gamma(gamma)?;
    Ok(p_inf_diag * ((2.0 - gamma) / gamma))
}

/// Parameters of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub u: f64,
    pub v: f64,
}

impl BetaParams {
    pub fn mean(&self) -> f64 {
        self.u / (self.u + self.v)
    }

    pub fn variance(&self) -> f64 {
        let s = self.u + self.v;
        self.u * self.v / (s * s * (s + 1.0))
    }
}

/// Beta(u, v) with mean `q` and variance `var`:
/// `u = q^2 (1 - q) / var - q`, `v = u / q - u`.
pub fn beta_params_from_moments(q: f64, var: f64) -> Result<BetaParams> {
    let infeasible = || Error::MomentMatching {
        index: 0,
        mean: q,
        variance: var,
    };
    if !(q > 0.0 && q < 1.0 && var > 0.0) {
        return Err(infeasible());
    }
    let u = q * q * (1.0 - q) / var - q;
    let v = u / q - u;
    if u > 0.0 && v > 0.0 && u.is_finite() && v.is_finite() {
        Ok(BetaParams { u, v })
    } else {
        Err(infeasible())
    }
}

/// `(1 - gamma)^t` and `1 - (1 - gamma)^t`, accurate for small `gamma`.
fn decay(gamma: f64, t: f64) -> (f64, f64) {
    if t == 0.0 {
        return (1.0, 0.0);
    }
    if gamma >= 1.0 {
        return (0.0, 1.0);
    }
    let log = t * (-gamma).ln_1p();
    (log.exp(), -log.exp_m1())
}

/// Mean and covariance of the state `steps` heats after `(a1, P1)`:
///
/// ```text
/// a = (1-g)^t a1 + (1 - (1-g)^t) q
/// P = (1-g)^(2t) P1 + (1 - (1-g)^(2t)) / (1 - (1-g)^2) * g^2 Q
/// ```
pub fn propagate_moments(
    a1: &DVector<f64>,
    p1: &DMatrix<f64>,
    gamma: f64,
    q: &DVector<f64>,
    q_cov_diag: &DVector<f64>,
    steps: u64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a1.len();
    check_dim("P1 rows", n, p1.nrows())?;
    check_dim("P1 columns", n, p1.ncols())?;
    check_dim("q", n, q.len())?;
    check_dim("Q", n, q_cov_diag.len())?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("gamma = {gamma} outside [0, 1]")));
    }
    let t = steps as f64;
    let (keep, drift) = decay(gamma, t);
    let mean = a1 * keep + q * drift;

    let (keep2, drift2) = decay(gamma, 2.0 * t);
    // sum_{j<t} (1-g)^(2j) = (1 - (1-g)^(2t)) / (1 - (1-g)^2)
    let geometric = if gamma == 0.0 {
        t
    } else {
        drift2 / (gamma * (2.0 - gamma))
    };
    let mut cov = p1 * keep2;
    let noise = gamma * gamma * geometric;
    for i in 0..n {
        cov[(i, i)] += noise * q_cov_diag[i];
    }
    Ok((mean, cov))
}

/// Observation-noise variance of the linear model, kg²:
/// `m_steel^2 sd_f_steel^2 + m_hm^2 sd_f_hm^2`.
pub fn estimate_obs_variance_linear(m_steel: f64, sd_f_steel: f64, m_hm: f64, sd_f_hm: f64) -> f64 {
    m_steel * m_steel * sd_f_steel * sd_f_steel + m_hm * m_hm * sd_f_hm * sd_f_hm
}
