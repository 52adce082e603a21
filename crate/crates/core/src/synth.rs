//! Seeded synthetic datasets with known ground truth.
//!
//! Heat masses come from outside (a production CSV, or the surrogate
//! generator in [`surrogate`]). This module draws the hidden composition
//! trajectory, the partition-parameter trajectory for slag-forming elements,
//! and the noisy steel measurements.

pub mod surrogate;

use nalgebra::DVector;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::error::{check_dim, Error, Result};
use crate::model::{
    beta_params_from_moments, ElementSpec, HeatRecord, NoiseSpec, PartitionModel, ScrapCatalog,
};

/// Independent RNG streams derived from one seed, so that e.g. changing the
/// observation noise does not perturb the state trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    State = 1,
    Partition = 2,
    Observation = 3,
    HeatMasses = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Per-component Beta sampler matched to mean `q` and variance `Q_ii`.
///
/// A component with zero variance is a point mass at its mean.
#[derive(Debug, Clone)]
pub struct BetaSampler {
    components: Vec<Component>,
}

#[derive(Debug, Clone)]
enum Component {
    Point(f64),
    Beta(Beta<f64>),
}

impl BetaSampler {
    /// Checks moment-matching feasibility for every component up front.
    pub fn new(q: &DVector<f64>, q_cov_diag: &DVector<f64>) -> Result<Self> {
        check_dim("Q", q.len(), q_cov_diag.len())?;
        let components = q
            .iter()
            .zip(q_cov_diag.iter())
            .enumerate()
            .map(|(i, (&mean, &var))| {
                if var == 0.0 && (0.0..=1.0).contains(&mean) {
                    return Ok(Component::Point(mean));
                }
                let p = beta_params_from_moments(mean, var).map_err(|_| Error::MomentMatching {
                    index: i,
                    mean,
                    variance: var,
                })?;
                let beta = Beta::new(p.u, p.v).map_err(|e| {
                    Error::Numerical(format!("Beta({}, {}) at index {i}: {e}", p.u, p.v))
                })?;
                Ok(Component::Beta(beta))
            })
            .collect::<Result<_>>()?;
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.components.len(),
            self.components.iter().map(|c| match c {
                Component::Point(x) => *x,
                Component::Beta(b) => b.sample(rng),
            }),
        )
    }
}

/// One draw of `eta` with independent Beta components of mean `q` and
/// variance `diag(Q)`.
pub fn sample_beta_vector<R: Rng + ?Sized>(
    q: &DVector<f64>,
    q_cov_diag: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    Ok(BetaSampler::new(q, q_cov_diag)?.sample(rng))
}

/// `alpha[t+1] = (1 - gamma) alpha[t] + gamma eta[t]`, `T` states starting at `alpha1`.
pub fn generate_state_trajectory<R: Rng + ?Sized>(
    alpha1: &DVector<f64>,
    gamma: f64,
    q: &DVector<f64>,
    q_cov_diag: &DVector<f64>,
    n_heats: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    check_dim("alpha1", q.len(), alpha1.len())?;
    if n_heats == 0 {
        return Err(Error::Domain("trajectory length must be at least 1".into()));
    }
    if let Some(i) = alpha1.iter().position(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::Domain(format!(
            "alpha1[{i}] = {} outside [0, 1]",
            alpha1[i]
        )));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("gamma = {gamma} outside [0, 1]")));
    }
    let sampler = BetaSampler::new(q, q_cov_diag)?;
    let mut out = Vec::with_capacity(n_heats);
    out.push(alpha1.clone());
    for _ in 1..n_heats {
        let eta = sampler.sample(rng);
        let prev = out.last().unwrap();
        let next = prev * (1.0 - gamma) + eta * gamma;
        // a convex combination of values in [0, 1] can overshoot by an ulp
        out.push(next.map(|x| x.clamp(0.0, 1.0)));
    }
    Ok(out)
}

/// `c[t+1] = (1 - gamma) c[t] + gamma theta[t]` with Gaussian
/// `theta ~ N(q_c, diag(Q_c))`, starting at `c1`.
pub fn generate_partition_trajectory<R: Rng + ?Sized>(
    c1: [f64; 2],
    gamma: f64,
    q_c: [f64; 2],
    q_c_cov_diag: [f64; 2],
    n_heats: usize,
    rng: &mut R,
) -> Result<Vec<[f64; 2]>> {
    if n_heats == 0 {
        return Err(Error::Domain("trajectory length must be at least 1".into()));
    }
    let normals = [0, 1]
        .map(|i| Normal::new(q_c[i], q_c_cov_diag[i].sqrt()))
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Domain(format!("partition noise: {e}")))?;
    let mut out = Vec::with_capacity(n_heats);
    out.push(c1);
    for _ in 1..n_heats {
        let prev = *out.last().unwrap();
        let theta = [normals[0].sample(rng), normals[1].sample(rng)];
        out.push([0, 1].map(|i| (1.0 - gamma) * prev[i] + gamma * theta[i]));
    }
    Ok(out)
}

fn gaussian_noise<R: Rng + ?Sized>(obs_var: f64, rng: &mut R) -> Result<f64> {
    if obs_var == 0.0 {
        return Ok(0.0);
    }
    let n = Normal::new(0.0, obs_var.sqrt())
        .map_err(|e| Error::Domain(format!("observation variance {obs_var}: {e}")))?;
    Ok(n.sample(rng))
}

fn check_lengths(truth: usize, heats: usize) -> Result<()> {
    if truth != heats {
        return Err(Error::Misaligned(format!(
            "{truth} truth states for {heats} heats"
        )));
    }
    Ok(())
}

/// Fills in `f_steel` for an element that stays in the steel.
///
/// `y = m . alpha + eps`, `eps ~ N(0, H)`, and `f_steel = (M + eps) / m_steel`
/// where `M = m . alpha + m_hm f_hm`, so that the record reproduces `y`.
/// Returns the completed heats and the observations `y`.
pub fn synthesize_linear<R: Rng + ?Sized>(
    truth: &[DVector<f64>],
    heats: &[HeatRecord],
    obs_var: f64,
    rng: &mut R,
) -> Result<(Vec<HeatRecord>, Vec<f64>)> {
    check_lengths(truth.len(), heats.len())?;
    let mut out = Vec::with_capacity(heats.len());
    let mut ys = Vec::with_capacity(heats.len());
    for (alpha, heat) in truth.iter().zip(heats) {
        check_dim("scrap masses", alpha.len(), heat.scrap_mass.len())?;
        if heat.m_steel <= 0.0 {
            return Err(Error::InvalidHeat {
                heat_index: heat.heat_index,
                reason: "m_steel must be positive to form an observation".into(),
            });
        }
        let scrap = heat.scrap_element_mass(alpha.as_slice());
        let eps = gaussian_noise(obs_var, rng)?;
        let total = scrap + heat.hot_metal_element_mass();
        let mut h = heat.clone();
        h.f_steel = Some((total + eps) / heat.m_steel);
        out.push(h);
        ys.push(scrap + eps);
    }
    Ok((out, ys))
}

/// Noise-free element mass in the steel for a partitioning element:
/// `(m . alpha + m_hm f_hm) / (1 + ell m_slag / m_steel)`.
pub fn steel_element_mass(heat: &HeatRecord, alpha: &[f64], c: [f64; 2]) -> Result<f64> {
    let f_feon = heat.f_feon_slag.unwrap_or(0.0);
    let ell = PartitionModel::new(c[0], c[1]).ell(f_feon);
    let denom = 1.0 + ell * heat.m_slag / heat.m_steel;
    if !(denom > 0.0) || heat.m_steel <= 0.0 {
        return Err(Error::Partition {
            heat_index: heat.heat_index,
            denominator: denom,
        });
    }
    Ok((heat.scrap_element_mass(alpha) + heat.hot_metal_element_mass()) / denom)
}

/// Fills in `f_steel` for an element that partitions into the slag.
///
/// `y = M_steel + eps` with `M_steel` from [`steel_element_mass`], and
/// `f_steel = y / m_steel`. Returns the completed heats and `y`.
pub fn synthesize_nonlinear<R: Rng + ?Sized>(
    truth_alpha: &[DVector<f64>],
    truth_c: &[[f64; 2]],
    heats: &[HeatRecord],
    obs_var: f64,
    rng: &mut R,
) -> Result<(Vec<HeatRecord>, Vec<f64>)> {
    check_lengths(truth_alpha.len(), heats.len())?;
    check_lengths(truth_c.len(), heats.len())?;
    let mut out = Vec::with_capacity(heats.len());
    let mut ys = Vec::with_capacity(heats.len());
    for ((alpha, c), heat) in truth_alpha.iter().zip(truth_c).zip(heats) {
        check_dim("scrap masses", alpha.len(), heat.scrap_mass.len())?;
        if heat.m_slag > 0.0 && heat.f_feon_slag.is_none() {
            return Err(Error::InvalidHeat {
                heat_index: heat.heat_index,
                reason: "f_feon_slag is required for a partitioning element".into(),
            });
        }
        let mass = steel_element_mass(heat, alpha.as_slice(), *c)?;
        let y = mass + gaussian_noise(obs_var, rng)?;
        let mut h = heat.clone();
        h.f_steel = Some(y / heat.m_steel);
        out.push(h);
        ys.push(y);
    }
    Ok((out, ys))
}

/// A synthetic dataset: heats with generated steel measurements together
/// with the hidden truth that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub catalog: ScrapCatalog,
    pub element: ElementSpec,
    pub heats: Vec<HeatRecord>,
    pub truth_alpha: Vec<DVector<f64>>,
    pub truth_c: Option<Vec<[f64; 2]>>,
    /// Observations `y_t`, kg (scrap element mass for linear elements,
    /// steel element mass for partitioning ones).
    pub observations: Vec<f64>,
    pub seed: u64,
    pub noise: NoiseSpec,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.heats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heats.is_empty()
    }

    /// True numerator `m . alpha + m_hm f_hm` (kg) and denominator
    /// `m_steel + m_slag ell` (kg) per heat. `None` for linear elements.
    pub fn true_fraction_parts(&self) -> Option<Vec<(f64, f64)>> {
        let cs = self.truth_c.as_ref()?;
        Some(
            self.heats
                .iter()
                .zip(&self.truth_alpha)
                .zip(cs)
                .map(|((h, a), c)| {
                    let num = h.scrap_element_mass(a.as_slice()) + h.hot_metal_element_mass();
                    let ell = PartitionModel::new(c[0], c[1]).ell(h.f_feon_slag.unwrap_or(0.0));
                    (num, h.m_steel + h.m_slag * ell)
                })
                .collect(),
        )
    }
}

/// Generates a dataset for `element` over the given heat masses.
///
/// The state starts at `alpha1` (default `q`) and the partition parameters
/// at `q_c`. `noise` must carry partition noise for partitioning elements.
pub fn generate_dataset(
    catalog: &ScrapCatalog,
    element: &ElementSpec,
    noise: &NoiseSpec,
    alpha1: Option<&DVector<f64>>,
    heat_masses: &[HeatRecord],
    seed: u64,
) -> Result<SyntheticDataset> {
    check_dim("noise mean", catalog.len(), noise.n_scrap())?;
    if heat_masses.is_empty() {
        return Err(Error::Domain("no heats to synthesize".into()));
    }
    let n = heat_masses.len();
    let alpha1 = alpha1.cloned().unwrap_or_else(|| noise.mean.clone());

    let mut state_rng = stream_rng(seed, Stream::State);
    let truth_alpha = generate_state_trajectory(
        &alpha1,
        noise.gamma,
        &noise.mean,
        &noise.cov_diag,
        n,
        &mut state_rng,
    )?;

    let mut obs_rng = stream_rng(seed, Stream::Observation);
    let (heats, observations, truth_c) = if element.transfers_to_slag {
        let p = noise.partition.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "element {} partitions into the slag but no partition noise was given",
                element.id
            ))
        })?;
        let q_c = [p.mean[0], p.mean[1]];
        let mut part_rng = stream_rng(seed, Stream::Partition);
        let cs = generate_partition_trajectory(
            q_c,
            noise.gamma,
            q_c,
            [p.cov_diag[0], p.cov_diag[1]],
            n,
            &mut part_rng,
        )?;
        let (h, y) =
            synthesize_nonlinear(&truth_alpha, &cs, heat_masses, noise.obs_var, &mut obs_rng)?;
        (h, y, Some(cs))
    } else {
        let (h, y) = synthesize_linear(&truth_alpha, heat_masses, noise.obs_var, &mut obs_rng)?;
        (h, y, None)
    };

    Ok(SyntheticDataset {
        catalog: catalog.clone(),
        element: element.clone(),
        heats,
        truth_alpha,
        truth_c,
        observations,
        seed,
        noise: noise.clone(),
    })
}

/// Representative mean element fractions per scrap type.
///
/// Scrap types 1, 2 and the last one carry fixed reference means for
/// Cu, Ni, Cr and S (ppm): Cu 208.80 / 900.00 / 3060.99, Ni 227.70 / 227.70 /
/// 1147.95, Cr 180.00 / 900.00 / 1601.64, S 99.00 / 351.00 / 342.00. The other
/// types are filled log-uniformly between the smallest and largest pinned
/// value from a fixed internal seed, so the vector is the same everywhere.
pub fn representative_means(element_id: &str, n_scrap: usize) -> Result<DVector<f64>> {
    let pinned: [f64; 3] = match element_id {
        "Cu" => [208.80, 900.00, 3060.99],
        "Ni" => [227.70, 227.70, 1147.95],
        "Cr" => [180.00, 900.00, 1601.64],
        "S" => [99.00, 351.00, 342.00],
        other => {
            return Err(Error::Config(format!(
                "no representative means for element {other:?}"
            )))
        }
    };
    if n_scrap == 0 {
        return Err(Error::Domain("n_scrap must be positive".into()));
    }
    let lo = pinned.iter().copied().fold(f64::INFINITY, f64::min).ln();
    let hi = pinned.iter().copied().fold(0.0, f64::max).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5C4A_9C0D);
    let mut out = DVector::zeros(n_scrap);
    for i in 0..n_scrap {
        let u: f64 = rng.random();
        out[i] = (lo + (hi - lo) * u).exp();
    }
    out[0] = pinned[0];
    if n_scrap > 1 {
        out[1] = pinned[1];
    }
    if n_scrap > 2 {
        out[n_scrap - 1] = pinned[2];
    }
    Ok(out.map(crate::model::from_ppm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat(idx: u64, masses: Vec<f64>) -> HeatRecord {
        HeatRecord {
            heat_index: idx,
            scrap_mass: masses,
            m_hm: 0.0,
            f_hm: 0.0,
            m_steel: 1.0,
            f_steel: None,
            m_slag: 0.0,
            f_feon_slag: None,
        }
    }

    #[test]
    fn zero_variance_beta_is_point_mass() {
        let q = DVector::from_vec(vec![0.01, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = sample_beta_vector(&q, &DVector::zeros(2), &mut rng).unwrap();
        assert_eq!(x, q);
        let tiny = DVector::from_element(2, 1e-14);
        let x = sample_beta_vector(&q, &tiny, &mut rng).unwrap();
        assert!((x - &q).amax() < 1e-5);
    }

    #[test]
    fn beta_samples_stay_in_unit_interval() {
        let q = DVector::from_vec(vec![1e-4, 0.5, 0.9]);
        let qq = DVector::from_vec(vec![5e-8, 0.2, 0.05]);
        let s = BetaSampler::new(&q, &qq).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let x = s.sample(&mut rng);
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn infeasible_beta_moments_are_rejected_up_front() {
        let q = DVector::from_vec(vec![0.1, 0.5]);
        let qq = DVector::from_vec(vec![0.001, 0.25]);
        match BetaSampler::new(&q, &qq) {
            Err(Error::MomentMatching { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gamma_zero_trajectory_is_constant() {
        let a1 = DVector::from_vec(vec![0.2, 0.4]);
        let q = DVector::from_vec(vec![0.1, 0.1]);
        let qq = DVector::from_vec(vec![0.001, 0.001]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tr = generate_state_trajectory(&a1, 0.0, &q, &qq, 50, &mut rng).unwrap();
        assert_eq!(tr.len(), 50);
        assert!(tr.iter().all(|a| *a == a1));
    }

    #[test]
    fn gamma_one_trajectory_is_iid_beta() {
        let a1 = DVector::from_vec(vec![0.9]);
        let q = DVector::from_vec(vec![0.2]);
        let qq = DVector::from_vec(vec![0.01]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tr = generate_state_trajectory(&a1, 1.0, &q, &qq, 20_001, &mut rng).unwrap();
        let xs: Vec<f64> = tr[1..].iter().map(|a| a[0]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let lag1 = xs
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / (n - 1.0);
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 0.2).abs() < 4.0 * (0.01f64 / n).sqrt());
        assert!((var - 0.01).abs() < 0.001);
        assert!((lag1 / var).abs() < 4.0 / n.sqrt());
    }

    #[test]
    fn constant_partition_trajectory_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cs = generate_partition_trajectory(
            [9.7, 0.01],
            0.01,
            [9.7, 0.01],
            [0.0, 0.0],
            100,
            &mut rng,
        )
        .unwrap();
        assert!(cs
            .iter()
            .all(|c| (c[0] - 9.7).abs() < 1e-12 && (c[1] - 0.01).abs() < 1e-15));
    }

    #[test]
    fn noiseless_linear_observation_is_exact() {
        let truth = vec![DVector::from_vec(vec![0.01])];
        let heats = vec![heat(1, vec![1.0])];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (h, y) = synthesize_linear(&truth, &heats, 0.0, &mut rng).unwrap();
        assert_eq!(y[0], 0.01);
        assert_eq!(h[0].linear_observation().unwrap(), 0.01);
    }

    #[test]
    fn linear_rejects_zero_steel_mass() {
        let truth = vec![DVector::from_vec(vec![0.01])];
        let mut hh = heat(1, vec![1.0]);
        hh.m_steel = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(synthesize_linear(&truth, &[hh], 1.0, &mut rng).is_err());
    }

    #[test]
    fn partition_halves_steel_mass() {
        // ell = 10, m_slag / m_steel = 0.1 -> denominator 2
        let mut h = heat(1, vec![1000.0]);
        h.m_steel = 300e3;
        h.m_slag = 30e3;
        h.f_feon_slag = Some(0.0);
        let m = steel_element_mass(&h, &[1e-3], [10.0, 0.0]).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        // no slag: the linear recipe with the hot-metal term retained
        h.m_slag = 0.0;
        h.m_hm = 1000.0;
        h.f_hm = 2e-3;
        let m = steel_element_mass(&h, &[1e-3], [10.0, 0.0]).unwrap();
        assert!((m - 3.0).abs() < 1e-15);
    }

    #[test]
    fn negative_partition_denominator_is_an_error() {
        let mut h = heat(1, vec![1000.0]);
        h.m_slag = 1.0;
        h.f_feon_slag = Some(0.0);
        assert!(matches!(
            steel_element_mass(&h, &[1e-3], [-2.0, 0.0]),
            Err(Error::Partition { .. })
        ));
    }

    #[test]
    fn representative_means_pin_reference_entries() {
        let q = representative_means("Cu", 45).unwrap();
        assert!((q[0] - 208.80e-6).abs() < 1e-15);
        assert!((q[1] - 900e-6).abs() < 1e-15);
        assert!((q[44] - 3060.99e-6).abs() < 1e-15);
        assert!(q.iter().all(|&x| (208.80e-6..=3060.99e-6).contains(&x)));
        assert_eq!(q, representative_means("Cu", 45).unwrap());
        assert!(representative_means("Xx", 45).is_err());
    }
}
