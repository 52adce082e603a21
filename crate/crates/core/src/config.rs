//! Run configuration: a JSON file whose fields may be overridden by flags.
//!
//! Noise hyperparameters are given as recipes, each with one admissible
//! source per quantity: `gamma` or `half_life_heats`, `stationary_rel_sd` or
//! `q_cov_ppm2`, `obs_var_kg2` or `obs_noise`, `k` or `spread_total`.
//! Omitted quantities fall back to the synthetic-data recipe.

use std::path::PathBuf;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::baseline::{ols_init, WindowConfig};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_BURN_IN;
use crate::filters::{FilterOptions, Spread};
use crate::model::{
    estimate_obs_variance_linear, from_ppm, gamma_from_half_life, ElementSpec, HeatRecord,
    NoiseSpec,
};
use crate::pipeline::{
    process_noise_for_rel_sd, synthetic_obs_var, HALF_LIFE_HEATS, PARTITION_MEAN,
    PARTITION_STATIONARY_REL_SD, STATIONARY_REL_SD,
};
use crate::synth::representative_means;
use crate::synth::surrogate::SurrogateConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Element symbol, e.g. "Cu".
    pub element: Option<String>,
    /// Needed only for elements other than Cu, Ni, Cr and S.
    pub transfers_to_slag: Option<bool>,
    /// Scrap types of a synthetic catalog (default 45).
    pub n_scrap: Option<usize>,
    pub noise: NoiseRecipe,
    pub window: WindowSection,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub simulation: SimulationSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseRecipe {
    pub mean: MeanSource,
    pub gamma: Option<f64>,
    pub half_life_heats: Option<f64>,
    /// Stationary sd of each fraction relative to its mean.
    pub stationary_rel_sd: Option<f64>,
    pub q_cov_ppm2: Option<Vec<f64>>,
    pub obs_var_kg2: Option<f64>,
    pub obs_noise: Option<ObsNoise>,
    pub partition: Option<PartitionRecipe>,
    pub k: Option<f64>,
    pub spread_total: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeanSource {
    /// Built-in representative means of the element.
    #[default]
    Representative,
    Literal {
        q_ppm: Vec<f64>,
    },
    /// Least squares on the first `heats` heats, floored at `floor_ppm`.
    OlsInit {
        #[serde(default = "default_ols_heats")]
        heats: usize,
        #[serde(default = "default_floor_ppm")]
        floor_ppm: f64,
    },
}

fn default_ols_heats() -> usize {
    5000
}

fn default_floor_ppm() -> f64 {
    0.1
}

/// Observation variance from measurement spreads:
/// `m_steel^2 sd_f_steel^2 + m_hm^2 sd_f_hm^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsNoise {
    pub m_steel_kg: f64,
    pub sd_f_steel_ppm: f64,
    #[serde(default)]
    pub m_hm_kg: f64,
    #[serde(default)]
    pub sd_f_hm_ppm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionRecipe {
    pub q_c: Option<[f64; 2]>,
    pub stationary_rel_sd: Option<f64>,
    pub q_c_cov: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub window: Option<usize>,
    pub min_rows: Option<usize>,
    pub fixed_ell: Option<f64>,
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n_heats: Option<usize>,
    /// Heats CSV supplying the masses; measured fractions in it are ignored.
    pub masses: Option<PathBuf>,
    pub surrogate: Option<SurrogateConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub heats: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub noise: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn exclusive<A, B>(
    a: Option<A>,
    b: Option<B>,
    names: (&str, &str),
) -> Result<Option<std::result::Result<A, B>>> {
    match (a, b) {
        (Some(_), Some(_)) => Err(Error::Config(format!(
            "give only one of {} and {}",
            names.0, names.1
        ))),
        (Some(a), None) => Ok(Some(Ok(a))),
        (None, Some(b)) => Ok(Some(Err(b))),
        (None, None) => Ok(None),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Canonical JSON of the effective configuration (used for hashing).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn element(&self) -> Result<ElementSpec> {
        let id = self
            .element
            .as_deref()
            .ok_or_else(|| Error::Config("no element given (--element or \"element\")".into()))?;
        match self.transfers_to_slag {
            Some(true) => Ok(ElementSpec::partitioning(id)),
            Some(false) => Ok(ElementSpec::linear(id)),
            None => ElementSpec::from_symbol(id),
        }
    }

    pub fn n_scrap(&self) -> usize {
        self.n_scrap.unwrap_or(45)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(DEFAULT_BURN_IN)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn window_config(&self) -> Result<WindowConfig> {
        let d = WindowConfig::default();
        let cfg = WindowConfig {
            window: self.window.window.unwrap_or(d.window),
            min_rows: self.window.min_rows.unwrap_or(d.min_rows),
            fixed_ell: self.window.fixed_ell.unwrap_or(d.fixed_ell),
            stride: self.window.stride.unwrap_or(d.stride),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn filter_options(&self) -> Result<FilterOptions> {
        let spread = match exclusive(self.noise.k, self.noise.spread_total, ("k", "spread_total"))?
        {
            Some(Ok(k)) => Spread::Fixed(k),
            Some(Err(total)) => Spread::TotalEquals(total),
            None => Spread::default(),
        };
        Ok(FilterOptions { spread })
    }

    pub fn gamma(&self) -> Result<f64> {
        match exclusive(
            self.noise.gamma,
            self.noise.half_life_heats,
            ("gamma", "half_life_heats"),
        )? {
            Some(Ok(g)) => {
                if !(g > 0.0 && g <= 1.0) {
                    return Err(Error::Config(format!("gamma {g} outside (0, 1]")));
                }
                Ok(g)
            }
            Some(Err(h)) => gamma_from_half_life(h),
            None => gamma_from_half_life(HALF_LIFE_HEATS),
        }
    }

    /// Resolves the noise hyperparameters. `heats` is needed for the
    /// `ols-init` mean source. Returns warnings alongside.
    pub fn resolve_noise(
        &self,
        n_scrap: usize,
        heats: Option<&[HeatRecord]>,
    ) -> Result<(NoiseSpec, Vec<String>)> {
        let element = self.element()?;
        let mut warnings = Vec::new();
        let q = match &self.noise.mean {
            MeanSource::Representative => representative_means(&element.id, n_scrap)?,
            MeanSource::Literal { q_ppm } => {
                if q_ppm.len() != n_scrap {
                    return Err(Error::Dimension {
                        what: "q_ppm",
                        expected: n_scrap,
                        got: q_ppm.len(),
                    });
                }
                DVector::from_iterator(n_scrap, q_ppm.iter().map(|q| from_ppm(*q)))
            }
            MeanSource::OlsInit {
                heats: k,
                floor_ppm,
            } => {
                let heats = heats.ok_or_else(|| {
                    Error::Config("the ols-init mean source needs measured heats (--heats)".into())
                })?;
                let k = (*k).min(heats.len());
                let init = ols_init(
                    &heats[..k],
                    &element,
                    self.window_config()?.fixed_ell,
                    from_ppm(*floor_ppm),
                )?;
                warnings.extend(init.warnings);
                if !init.clamped.is_empty() {
                    warnings.push(format!(
                        "{} negative OLS components were floored",
                        init.clamped.len()
                    ));
                }
                init.q
            }
        };
        let gamma = self.gamma()?;
        let q_cov = match exclusive(
            self.noise.stationary_rel_sd,
            self.noise.q_cov_ppm2.clone(),
            ("stationary_rel_sd", "q_cov_ppm2"),
        )? {
            Some(Ok(rel)) => process_noise_for_rel_sd(gamma, &q, rel)?,
            Some(Err(cov)) => {
                if cov.len() != n_scrap {
                    return Err(Error::Dimension {
                        what: "q_cov_ppm2",
                        expected: n_scrap,
                        got: cov.len(),
                    });
                }
                DVector::from_iterator(n_scrap, cov.iter().map(|c| c * 1e-12))
            }
            None => process_noise_for_rel_sd(gamma, &q, STATIONARY_REL_SD)?,
        };
        let obs_var = match exclusive(
            self.noise.obs_var_kg2,
            self.noise.obs_noise.clone(),
            ("obs_var_kg2", "obs_noise"),
        )? {
            Some(Ok(h)) => h,
            Some(Err(o)) => estimate_obs_variance_linear(
                o.m_steel_kg,
                from_ppm(o.sd_f_steel_ppm),
                o.m_hm_kg,
                from_ppm(o.sd_f_hm_ppm),
            ),
            None => synthetic_obs_var(&element),
        };
        let spec = NoiseSpec::new(gamma, q, q_cov, obs_var)?;
        if !element.transfers_to_slag {
            if self.noise.partition.is_some() {
                return Err(Error::Config(format!(
                    "element {} has no partition parameters",
                    element.id
                )));
            }
            return Ok((spec, warnings));
        }
        let p = self.noise.partition.clone().unwrap_or_default();
        let q_c = DVector::from_column_slice(&p.q_c.unwrap_or(PARTITION_MEAN));
        let q_c_cov = match exclusive(
            p.stationary_rel_sd,
            p.q_c_cov,
            ("partition.stationary_rel_sd", "partition.q_c_cov"),
        )? {
            Some(Ok(rel)) => process_noise_for_rel_sd(gamma, &q_c, rel)?,
            Some(Err(cov)) => DVector::from_column_slice(&cov),
            None => process_noise_for_rel_sd(gamma, &q_c, PARTITION_STATIONARY_REL_SD)?,
        };
        Ok((spec.with_partition(q_c, q_c_cov)?, warnings))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_synthetic_recipe() {
        let cfg = RunConfig::from_json(r#"{"element": "Cu", "n_scrap": 4}"#).unwrap();
        let (spec, w) = cfg.resolve_noise(4, None).unwrap();
        assert!(w.is_empty());
        assert!((spec.gamma - 2f64.ln() / 1000.0).abs() < 1e-18);
        assert!((spec.obs_var - 17.6416).abs() < 1e-12);
        assert!(spec.partition.is_none());
    }

    #[test]
    fn half_life_and_gamma_are_exclusive() {
        let cfg = RunConfig::from_json(
            r#"{"element": "Cu", "noise": {"gamma": 0.1, "half_life_heats": 10}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.gamma(), Err(Error::Config(_))));
        let cfg = RunConfig::from_json(r#"{"element": "Cu", "noise": {"half_life_heats": 1000}}"#)
            .unwrap();
        assert!((cfg.gamma().unwrap() - 6.93147e-4).abs() < 1e-9);
    }

    #[test]
    fn stationary_rule_and_q_are_exclusive() {
        let cfg = RunConfig::from_json(
            r#"{"element": "Cu", "noise": {"stationary_rel_sd": 0.05, "q_cov_ppm2": [1, 2]}}"#,
        )
        .unwrap();
        assert!(cfg.resolve_noise(2, None).is_err());
    }

    #[test]
    fn literal_means_and_partition_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"element": "Cr", "noise": {"mean": {"source": "literal", "q_ppm": [100, 200]}}}"#,
        )
        .unwrap();
        let (spec, _) = cfg.resolve_noise(2, None).unwrap();
        assert_eq!(spec.mean[1], 200e-6);
        let p = spec.partition.unwrap();
        assert_eq!(p.mean[0], 9.7);
        assert!(cfg.resolve_noise(3, None).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"element": "Cu", "gama": 1}"#).is_err());
    }
}
