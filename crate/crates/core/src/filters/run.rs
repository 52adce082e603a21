use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::model::{ElementSpec, GaussianBelief, HeatRecord, NoiseSpec};

use super::kalman::kalman_step;
use super::sigma::Spread;
use super::ukf::ukf_step;
use super::StepOutput;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterOptions {
    /// Sigma-point spread (unscented filter only).
    pub spread: Spread,
}

/// Per-heat record of a filter run.
///
/// Only the marginal variances are kept; full covariances are available
/// through [`Filter::belief`] or the step functions.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub heat_index: u64,
    pub prior_mean: DVector<f64>,
    pub prior_var: DVector<f64>,
    pub posterior_mean: DVector<f64>,
    pub posterior_var: DVector<f64>,
    pub innovation: Option<f64>,
    pub innovation_variance: Option<f64>,
    /// Steel fraction predicted from the prior, before the heat is seen.
    pub predicted_f_steel: Option<f64>,
    /// Predicted element mass `m . a + m_hm f_hm`, kg.
    pub predicted_numerator: f64,
    /// Predicted mass the element is spread over, kg (`m_steel` when linear).
    pub predicted_denominator: f64,
    /// Set when the predicted fraction or any posterior scrap fraction is negative.
    pub negative_estimate: bool,
    pub reflected_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace {
    pub element: ElementSpec,
    pub n_scrap: usize,
    pub initial: GaussianBelief,
    pub entries: Vec<TraceEntry>,
    /// Prior for the heat after the last one.
    pub final_belief: GaussianBelief,
}

impl FilterTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_reflections(&self) -> usize {
        self.entries.iter().map(|e| e.reflected_points).sum()
    }
}

/// Numerator and denominator (kg) of the steel fraction predicted from a
/// belief, without looking at `f_steel`.
fn predicted_parts(
    belief: &GaussianBelief,
    heat: &HeatRecord,
    element: &ElementSpec,
    n: usize,
) -> Result<(f64, f64)> {
    let num = heat.scrap_element_mass(&belief.mean.as_slice()[..n]) + heat.hot_metal_element_mass();
    let den = if element.transfers_to_slag {
        check_dim("augmented belief", n + 2, belief.dim())?;
        let ell = belief.mean[n] + belief.mean[n + 1] * heat.f_feon_slag.unwrap_or(0.0);
        heat.m_steel + heat.m_slag * ell
    } else {
        heat.m_steel
    };
    if !(den > 0.0) {
        return Err(Error::Partition {
            heat_index: heat.heat_index,
            denominator: den,
        });
    }
    Ok((num, den))
}

/// Steel fraction predicted for `heat` from a belief over the scrap fractions
/// (and, for partitioning elements, `[c1, c2]`).
pub fn predict_steel_fraction(
    belief: &GaussianBelief,
    heat: &HeatRecord,
    element: &ElementSpec,
) -> Result<f64> {
    let n = heat.scrap_mass.len();
    if belief.dim() < n {
        return Err(Error::Dimension {
            what: "belief",
            expected: n,
            got: belief.dim(),
        });
    }
    let (num, den) = predicted_parts(belief, heat, element, n)?;
    Ok(num / den)
}

/// Streaming filter: feed heats one by one in increasing `heat_index`.
#[derive(Debug, Clone)]
pub struct Filter {
    element: ElementSpec,
    spec: NoiseSpec,
    options: FilterOptions,
    belief: GaussianBelief,
    last_index: Option<u64>,
}

impl Filter {
    pub fn new(
        element: ElementSpec,
        spec: NoiseSpec,
        initial: GaussianBelief,
        options: FilterOptions,
    ) -> Result<Self> {
        if element.transfers_to_slag && spec.partition.is_none() {
            return Err(Error::Config(format!(
                "element {} partitions into the slag; partition noise (q_c, Q_c) is required",
                element.id
            )));
        }
        if !element.transfers_to_slag && spec.partition.is_some() {
            return Err(Error::Config(format!(
                "element {} stays in the steel; partition noise must not be given",
                element.id
            )));
        }
        check_dim("initial belief", spec.state_dim(), initial.dim())?;
        initial.check_invariants()?;
        Ok(Self {
            element,
            spec,
            options,
            belief: initial,
            last_index: None,
        })
    }

    /// Current prior (for the next heat).
    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn step(&mut self, heat: &HeatRecord) -> Result<(TraceEntry, StepOutput)> {
        let n = self.spec.n_scrap();
        heat.validate(n)?;
        if let Some(last) = self.last_index {
            if heat.heat_index <= last {
                return Err(Error::InvalidHeat {
                    heat_index: heat.heat_index,
                    reason: format!("heat_index not increasing (previous {last})"),
                });
            }
        }
        let prior = &self.belief;
        let parts = if heat.m_steel > 0.0 {
            Some(predicted_parts(prior, heat, &self.element, n)?)
        } else {
            None
        };
        let out = if self.element.transfers_to_slag {
            let k = self.options.spread.resolve(self.spec.state_dim());
            ukf_step(prior, heat, &self.spec, k)?
        } else {
            kalman_step(prior, heat, &self.spec)?
        };
        let predicted = parts.map(|(num, den)| num / den);
        let negative_estimate = predicted.is_some_and(|f| f < 0.0)
            || out.posterior.mean.iter().take(n).any(|a| *a < 0.0);
        let entry = TraceEntry {
            heat_index: heat.heat_index,
            prior_mean: prior.mean.clone(),
            prior_var: prior.variances(),
            posterior_mean: out.posterior.mean.clone(),
            posterior_var: out.posterior.variances(),
            innovation: out.innovation.map(|i| i.value),
            innovation_variance: out.innovation.map(|i| i.variance),
            predicted_f_steel: predicted,
            predicted_numerator: parts.map_or(f64::NAN, |p| p.0),
            predicted_denominator: parts.map_or(f64::NAN, |p| p.1),
            negative_estimate,
            reflected_points: out.reflected_points,
        };
        self.belief = out.next_prior.clone();
        self.last_index = Some(heat.heat_index);
        Ok((entry, out))
    }
}

/// Runs the filter matching `element` over all heats.
pub fn run_filter(
    heats: &[HeatRecord],
    element: &ElementSpec,
    spec: &NoiseSpec,
    initial: Option<GaussianBelief>,
    options: FilterOptions,
) -> Result<FilterTrace> {
    let initial = initial.unwrap_or_else(|| spec.default_initial_belief());
    let mut filter = Filter::new(element.clone(), spec.clone(), initial.clone(), options)?;
    let mut entries = Vec::with_capacity(heats.len());
    for heat in heats {
        entries.push(filter.step(heat)?.0);
    }
    Ok(FilterTrace {
        element: element.clone(),
        n_scrap: spec.n_scrap(),
        initial,
        entries,
        final_belief: filter.belief,
    })
}
