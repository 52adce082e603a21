use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::model::{symmetrize, GaussianBelief, HeatRecord, NoiseSpec};

use super::{Innovation, StepOutput};

/// Smallest innovation variance accepted before the update is declared failed.
pub const MIN_INNOVATION_VARIANCE: f64 = 1e-300;

/// Time update with a non-zero process-noise mean:
/// `a' = (1 - gamma) a + gamma q`, `P' = (1 - gamma)^2 P + gamma^2 Q`.
///
/// Works on the plain or the augmented state, whichever `belief` carries.
pub fn predict_only(belief: &GaussianBelief, spec: &NoiseSpec) -> Result<GaussianBelief> {
    check_dim("belief dimension", spec.state_dim(), belief.dim())?;
    let g = spec.gamma;
    let keep = 1.0 - g;
    let mean = &belief.mean * keep + spec.augmented_mean() * g;
    let mut cov = &belief.cov * (keep * keep);
    for (i, q) in spec.augmented_cov_diag().iter().enumerate() {
        cov[(i, i)] += g * g * q;
    }
    Ok(GaussianBelief { mean, cov })
}

/// Measurement update for one scalar observation `y = z . x + eps`,
/// `eps ~ N(0, obs_var)`.
pub fn scalar_update(
    prior: &GaussianBelief,
    z: &DVector<f64>,
    y: f64,
    obs_var: f64,
) -> Result<(GaussianBelief, Innovation)> {
    check_dim("observation row", prior.dim(), z.len())?;
    let pz = &prior.cov * z;
    let s = z.dot(&pz) + obs_var;
    if !(s > MIN_INNOVATION_VARIANCE) || !s.is_finite() {
        return Err(Error::Numerical(format!(
            "innovation variance {s:e} is not positive"
        )));
    }
    let v = y - z.dot(&prior.mean);
    let gain = &pz / s;
    let mean = &prior.mean + &gain * v;
    // (I - K Z) P = P - K (P Z^T)^T
    let mut cov = prior.cov.clone();
    cov.ger(-1.0 / s, &pz, &pz, 1.0);
    symmetrize(&mut cov);
    Ok((
        GaussianBelief { mean, cov },
        Innovation {
            value: v,
            variance: s,
        },
    ))
}

/// One heat of the Kalman filter for an element that stays in the steel.
///
/// The observation is `y = m_steel f_steel - m_hm f_hm` with row `Z = m^T`.
/// A heat without `f_steel` only runs the time update.
pub fn kalman_step(
    prior: &GaussianBelief,
    heat: &HeatRecord,
    spec: &NoiseSpec,
) -> Result<StepOutput> {
    check_dim("belief dimension", spec.n_scrap(), prior.dim())?;
    check_dim("scrap masses", spec.n_scrap(), heat.scrap_mass.len())?;
    let Some(y) = heat.linear_observation() else {
        return Ok(StepOutput {
            posterior: prior.clone(),
            next_prior: predict_only(prior, spec)?,
            innovation: None,
            reflected_points: 0,
        });
    };
    let z = DVector::from_column_slice(&heat.scrap_mass);
    let (posterior, innovation) = scalar_update(prior, &z, y, spec.obs_var)?;
    let next_prior = predict_only(&posterior, spec)?;
    Ok(StepOutput {
        posterior,
        next_prior,
        innovation: Some(innovation),
        reflected_points: 0,
    })
}
