use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::model::{symmetrize, GaussianBelief, HeatRecord, NoiseSpec};

use super::kalman::{predict_only, MIN_INNOVATION_VARIANCE};
use super::sigma::{cholesky_psd, sigma_points};
use super::{Innovation, StepOutput};

/// Element mass in the steel predicted from an augmented state
/// `x = [alpha, c1, c2]`:
///
/// ```text
/// Z(x) = (m . alpha + m_hm f_hm) / (1 + (c1 + c2 f_feon) m_slag / m_steel)
/// ```
///
/// When the denominator is not positive, `(c1, c2)` is reflected through the
/// origin for this evaluation, i.e. the partition coefficient `ell` is
/// replaced by `-ell`. Returns the value and whether a reflection happened.
pub fn observe_steel_mass(heat: &HeatRecord, x: &DVector<f64>, n_scrap: usize) -> (f64, bool) {
    let numerator = heat
        .scrap_mass
        .iter()
        .zip(x.iter())
        .map(|(m, a)| m * a)
        .sum::<f64>()
        + heat.hot_metal_element_mass();
    let ratio = if heat.m_slag == 0.0 {
        0.0
    } else {
        heat.m_slag / heat.m_steel
    };
    let f_feon = heat.f_feon_slag.unwrap_or(0.0);
    let ell = x[n_scrap] + x[n_scrap + 1] * f_feon;
    let denom = 1.0 + ell * ratio;
    if denom > 0.0 {
        (numerator / denom, false)
    } else {
        (numerator / (1.0 - ell * ratio), true)
    }
}

/// One heat of the unscented Kalman filter for an element that partitions
/// into the slag. The belief is over `[alpha, c1, c2]`.
pub fn ukf_step(
    prior: &GaussianBelief,
    heat: &HeatRecord,
    spec: &NoiseSpec,
    k: f64,
) -> Result<StepOutput> {
    let n = spec.n_scrap();
    if spec.partition.is_none() {
        return Err(Error::Config(
            "the unscented filter needs partition noise (q_c, Q_c)".into(),
        ));
    }
    check_dim("belief dimension", n + 2, prior.dim())?;
    check_dim("scrap masses", n, heat.scrap_mass.len())?;
    let Some(y) = heat.steel_element_mass() else {
        return Ok(StepOutput {
            posterior: prior.clone(),
            next_prior: predict_only(prior, spec)?,
            innovation: None,
            reflected_points: 0,
        });
    };
    if heat.m_steel <= 0.0 {
        return Err(Error::InvalidHeat {
            heat_index: heat.heat_index,
            reason: "m_steel must be positive".into(),
        });
    }
    if heat.m_slag > 0.0 && heat.f_feon_slag.is_none() {
        return Err(Error::InvalidHeat {
            heat_index: heat.heat_index,
            reason: "f_feon_slag is required for a partitioning element".into(),
        });
    }

    let factor = cholesky_psd(&prior.cov)?;
    let sigma = sigma_points(&prior.mean, &factor.lower, k)?;

    let mut reflected = 0;
    let zs: Vec<f64> = sigma
        .points
        .iter()
        .map(|x| {
            let (z, r) = observe_steel_mass(heat, x, n);
            reflected += r as usize;
            z
        })
        .collect();
    let y_bar: f64 = zs.iter().zip(&sigma.weights).map(|(z, w)| w * z).sum();

    let m = prior.dim();
    let mut p_av = DVector::zeros(m);
    let mut p_vv = spec.obs_var;
    for ((x, z), w) in sigma.points.iter().zip(&zs).zip(&sigma.weights) {
        let dz = z - y_bar;
        p_av.axpy(w * dz, &(x - &prior.mean), 1.0);
        p_vv += w * dz * dz;
    }
    if !(p_vv > MIN_INNOVATION_VARIANCE) || !p_vv.is_finite() {
        return Err(Error::Numerical(format!(
            "innovation variance {p_vv:e} at heat {}",
            heat.heat_index
        )));
    }
    let v = y - y_bar;
    let mean = &prior.mean + &p_av * (v / p_vv);
    let mut cov = prior.cov.clone();
    cov.ger(-1.0 / p_vv, &p_av, &p_av, 1.0);
    symmetrize(&mut cov);
    let posterior = GaussianBelief { mean, cov };
    let next_prior = predict_only(&posterior, spec)?;
    Ok(StepOutput {
        posterior,
        next_prior,
        innovation: Some(Innovation {
            value: v,
            variance: p_vv,
        }),
        reflected_points: reflected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn spec() -> NoiseSpec {
        NoiseSpec::new(
            0.01,
            DVector::from_vec(vec![1e-3, 2e-3]),
            DVector::from_vec(vec![1e-7, 1e-7]),
            4.0,
        )
        .unwrap()
        .with_partition(
            DVector::from_vec(vec![9.7, 0.01]),
            DVector::from_vec(vec![0.5, 1e-4]),
        )
        .unwrap()
    }

    fn heat() -> HeatRecord {
        HeatRecord {
            heat_index: 7,
            scrap_mass: vec![40e3, 30e3],
            m_hm: 280e3,
            f_hm: 4e-4,
            m_steel: 330e3,
            f_steel: Some(2.1e-4),
            m_slag: 40e3,
            f_feon_slag: Some(0.25),
        }
    }

    #[test]
    fn known_state_gives_plain_innovation() {
        let s = spec();
        let prior = GaussianBelief::new(s.augmented_mean(), DMatrix::zeros(4, 4)).unwrap();
        let out = ukf_step(&prior, &heat(), &s, 3.0).unwrap();
        assert_eq!(out.posterior.mean, prior.mean);
        let (z, _) = observe_steel_mass(&heat(), &prior.mean, 2);
        let inn = out.innovation.unwrap();
        assert!((inn.value - (heat().steel_element_mass().unwrap() - z)).abs() < 1e-12);
        assert_eq!(inn.variance, s.obs_var);
    }

    #[test]
    fn reflection_keeps_denominator_positive() {
        let h = heat();
        let x = DVector::from_vec(vec![1e-3, 1e-3, -30.0, 0.0]);
        let (z, r) = observe_steel_mass(&h, &x, 2);
        assert!(r);
        let x_ref = DVector::from_vec(vec![1e-3, 1e-3, 30.0, 0.0]);
        let (z_ref, r_ref) = observe_steel_mass(&h, &x_ref, 2);
        assert!(!r_ref);
        assert_eq!(z, z_ref);
    }

    #[test]
    fn requires_augmented_state() {
        let s = spec();
        let prior = GaussianBelief::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(ukf_step(&prior, &heat(), &s, 3.0).is_err());
    }
}
