//! Surrogate heat masses for users without production records.
//!
//! Masses are log-normal around a typical basic-oxygen-furnace charge
//! (about 280 t hot metal, 75 t scrap, 330 t tapped steel, 40 t slag).
//! Scrap usage is sparse: each type switches between active and idle
//! periods, a few types are rarely charged at all, and one type can be set to
//! fade out halfway through so that long unused stretches occur.

use rand::seq::index::sample_weighted;
use rand::{Rng, RngExt};
use rand_distr::{Distribution, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HeatRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub hot_metal_kg: f64,
    pub hot_metal_rel_sd: f64,
    pub scrap_total_kg: f64,
    pub scrap_total_rel_sd: f64,
    /// Tapped steel as a fraction of the metallic charge.
    pub steel_yield: f64,
    pub steel_rel_sd: f64,
    pub slag_kg: f64,
    pub slag_rel_sd: f64,
    pub feon_mean: f64,
    pub feon_sd: f64,
    pub f_hm_rel_sd: f64,
    pub min_types_per_heat: usize,
    pub max_types_per_heat: usize,
    /// Mean length, in heats, of an active period of a scrap type.
    pub mean_active_heats: f64,
    /// Mean length of an idle period.
    pub mean_idle_heats: f64,
    /// Share of scrap types charged only occasionally.
    pub rare_share: f64,
    /// Scrap type that is common in the first half and almost unused after.
    pub fading_type: Option<usize>,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hot_metal_kg: 280e3,
            hot_metal_rel_sd: 0.03,
            scrap_total_kg: 75e3,
            scrap_total_rel_sd: 0.15,
            steel_yield: 0.93,
            steel_rel_sd: 0.01,
            slag_kg: 40e3,
            slag_rel_sd: 0.10,
            feon_mean: 0.25,
            feon_sd: 0.04,
            f_hm_rel_sd: 0.2,
            min_types_per_heat: 3,
            max_types_per_heat: 8,
            mean_active_heats: 3000.0,
            mean_idle_heats: 1500.0,
            rare_share: 0.15,
            fading_type: Some(35),
        }
    }
}

fn log_normal(mean: f64, rel_sd: f64) -> Result<LogNormal<f64>> {
    let s2 = (1.0 + rel_sd * rel_sd).ln();
    LogNormal::new(mean.ln() - 0.5 * s2, s2.sqrt())
        .map_err(|e| Error::Config(format!("log-normal({mean}, {rel_sd}): {e}")))
}

/// `n_heats` heats over `n_scrap` types with `f_steel` left empty.
///
/// `f_hm_nominal` is the mean hot-metal fraction of the element the heats
/// will be used for.
pub fn generate_heat_masses<R: Rng + ?Sized>(
    n_scrap: usize,
    n_heats: usize,
    f_hm_nominal: f64,
    cfg: &SurrogateConfig,
    rng: &mut R,
) -> Result<Vec<HeatRecord>> {
    if n_scrap == 0 {
        return Err(Error::Domain("n_scrap must be positive".into()));
    }
    if cfg.min_types_per_heat == 0 || cfg.min_types_per_heat > cfg.max_types_per_heat {
        return Err(Error::Config("types per heat: need 1 <= min <= max".into()));
    }
    let hm = log_normal(cfg.hot_metal_kg, cfg.hot_metal_rel_sd)?;
    let scrap_total = log_normal(cfg.scrap_total_kg, cfg.scrap_total_rel_sd)?;
    let steel_noise = log_normal(1.0, cfg.steel_rel_sd)?;
    let slag = log_normal(cfg.slag_kg, cfg.slag_rel_sd)?;
    let f_hm = (f_hm_nominal > 0.0)
        .then(|| log_normal(f_hm_nominal, cfg.f_hm_rel_sd))
        .transpose()?;
    let feon = Normal::new(cfg.feon_mean, cfg.feon_sd)
        .map_err(|e| Error::Config(format!("FeOn distribution: {e}")))?;
    let share = Gamma::new(2.0, 1.0).expect("valid gamma");
    let popularity = log_normal(1.0, 1.0)?;

    let p_stop = 1.0 / cfg.mean_active_heats.max(1.0);
    let p_start = 1.0 / cfg.mean_idle_heats.max(1.0);
    let duty = cfg.mean_active_heats / (cfg.mean_active_heats + cfg.mean_idle_heats);

    let mut weight: Vec<f64> = (0..n_scrap).map(|_| popularity.sample(rng)).collect();
    let rare: Vec<bool> = (0..n_scrap)
        .map(|_| rng.random::<f64>() < cfg.rare_share)
        .collect();
    for (w, &r) in weight.iter_mut().zip(&rare) {
        if r {
            *w *= 0.02;
        }
    }
    let mut active: Vec<bool> = (0..n_scrap).map(|_| rng.random::<f64>() < duty).collect();
    let fading = cfg.fading_type.filter(|&i| i < n_scrap);

    let mut heats = Vec::with_capacity(n_heats);
    for t in 0..n_heats {
        for a in active.iter_mut() {
            let flip = if *a { p_stop } else { p_start };
            if rng.random::<f64>() < flip {
                *a = !*a;
            }
        }
        let late = t >= n_heats / 2;
        let eff_weight: Vec<f64> = (0..n_scrap)
            .map(|i| {
                if Some(i) == fading {
                    if late {
                        0.0
                    } else {
                        weight[i].max(1.0)
                    }
                } else if active[i] {
                    weight[i]
                } else {
                    0.0
                }
            })
            .collect();
        let available = eff_weight.iter().filter(|w| **w > 0.0).count();
        let want = rng.random_range(cfg.min_types_per_heat..=cfg.max_types_per_heat);
        let mut chosen: Vec<usize> = if available == 0 {
            Vec::new()
        } else {
            sample_weighted(rng, n_scrap, |i| eff_weight[i], want.min(available))
                .map_err(|e| Error::Numerical(format!("scrap selection: {e}")))?
                .into_iter()
                .collect()
        };
        if let Some(i) = fading {
            if late && rng.random::<f64>() < 0.002 {
                chosen.push(i);
            }
        }
        if chosen.is_empty() {
            chosen.push(rng.random_range(0..n_scrap));
        }

        let total = scrap_total.sample(rng);
        let shares: Vec<f64> = chosen.iter().map(|_| share.sample(rng)).collect();
        let share_sum: f64 = shares.iter().sum();
        let mut scrap_mass = vec![0.0; n_scrap];
        for (&i, s) in chosen.iter().zip(&shares) {
            scrap_mass[i] += total * s / share_sum;
        }

        let m_hm = hm.sample(rng);
        let m_steel = cfg.steel_yield * (m_hm + total) * steel_noise.sample(rng);
        heats.push(HeatRecord {
            heat_index: t as u64 + 1,
            scrap_mass,
            m_hm,
            f_hm: f_hm.as_ref().map_or(0.0, |d| d.sample(rng).min(1.0)),
            m_steel,
            f_steel: None,
            m_slag: slag.sample(rng),
            f_feon_slag: Some(feon.sample(rng).clamp(0.05, 0.6)),
        });
    }
    Ok(heats)
}

/// Nominal hot-metal fraction used by the surrogate for known elements.
pub fn nominal_hot_metal_fraction(element_id: &str) -> f64 {
    match element_id {
        "Cu" => 30e-6,
        "Ni" => 60e-6,
        "Cr" => 400e-6,
        "S" => 150e-6,
        _ => 0.0,
    }
}
