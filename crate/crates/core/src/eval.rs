//! Prediction-error statistics, misspecification sweeps and plot data.

use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::WindowEstimate;
use crate::error::{Error, Result};
use crate::filters::{run_filter, FilterOptions, FilterTrace, Spread};
use crate::model::{
    process_noise_from_stationary, stationary_covariance, to_ppm, ElementSpec, GaussianBelief,
    HeatRecord, NoiseSpec, ScrapCatalog, G_PER_KG, KG_PER_TONNE,
};
use crate::synth::SyntheticDataset;

pub const DEFAULT_BURN_IN: usize = 5000;

/// Mean and sample standard deviation (n - 1 divisor).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

pub fn moments(x: &[f64]) -> Result<Moments> {
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(Moments {
        mean,
        sd: (ss / (n - 1) as f64).sqrt(),
        n,
    })
}

/// Errors of the predicted element mass and of the mass it is spread over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartsSummary {
    pub numerator_mean_g: f64,
    pub numerator_sd_g: f64,
    pub denominator_mean_t: f64,
    pub denominator_sd_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean_error_ppm: f64,
    pub std_error_ppm: f64,
    pub n: usize,
    pub burn_in: usize,
    pub parts: Option<PartsSummary>,
}

/// Summary of errors already in ppm.
pub fn summarize(errors_ppm: &[f64], burn_in: usize) -> Result<ErrorSummary> {
    let m = moments(errors_ppm)?;
    Ok(ErrorSummary {
        mean_error_ppm: m.mean,
        std_error_ppm: m.sd,
        n: m.n,
        burn_in,
        parts: None,
    })
}

fn check_burn_in(burn_in: usize, len: usize) -> Result<()> {
    if burn_in >= len {
        return Err(Error::Config(format!(
            "burn-in {burn_in} must be below the {len} heats"
        )));
    }
    Ok(())
}

/// Read access to per-heat estimates, shared by in-memory filter runs and
/// traces loaded from disk.
pub trait TraceView {
    fn rows(&self) -> usize;
    fn n_scrap(&self) -> usize;
    fn heat_index(&self, row: usize) -> u64;
    fn predicted_f_steel(&self, row: usize) -> Option<f64>;
    /// Predicted numerator and denominator, kg (NaN when unknown).
    fn predicted_parts(&self, row: usize) -> (f64, f64);
    fn posterior_mean(&self, row: usize) -> &DVector<f64>;
    fn posterior_var(&self, row: usize) -> Option<&DVector<f64>>;
}

impl TraceView for FilterTrace {
    fn rows(&self) -> usize {
        self.entries.len()
    }

    fn n_scrap(&self) -> usize {
        self.n_scrap
    }

    fn heat_index(&self, row: usize) -> u64 {
        self.entries[row].heat_index
    }

    fn predicted_f_steel(&self, row: usize) -> Option<f64> {
        self.entries[row].predicted_f_steel
    }

    fn predicted_parts(&self, row: usize) -> (f64, f64) {
        let e = &self.entries[row];
        (e.predicted_numerator, e.predicted_denominator)
    }

    fn posterior_mean(&self, row: usize) -> &DVector<f64> {
        &self.entries[row].posterior_mean
    }

    fn posterior_var(&self, row: usize) -> Option<&DVector<f64>> {
        Some(&self.entries[row].posterior_var)
    }
}

/// One row of a serialized trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub heat_index: u64,
    pub predicted_f_steel: Option<f64>,
    pub predicted_numerator: f64,
    pub predicted_denominator: f64,
    pub innovation: Option<f64>,
    pub innovation_variance: Option<f64>,
    pub negative_estimate: bool,
    pub reflected_points: usize,
    pub mean: DVector<f64>,
    pub var: Option<DVector<f64>>,
}

/// Estimates of any method in one flat table: filter posteriors or windowed
/// NNLS fits (which carry no variances).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub element: ElementSpec,
    /// Scrap type ids; for slag elements the state also carries `c1`, `c2`.
    pub scrap_ids: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl TraceTable {
    pub fn state_names(&self) -> Vec<String> {
        let mut names = self.scrap_ids.clone();
        if self.element.transfers_to_slag
            && self
                .rows
                .first()
                .is_some_and(|r| r.mean.len() > names.len())
        {
            names.extend(["c1".to_string(), "c2".to_string()]);
        }
        names
    }

    pub fn from_filter_trace(trace: &FilterTrace, catalog: &ScrapCatalog) -> Self {
        Self {
            element: trace.element.clone(),
            scrap_ids: catalog.ids().to_vec(),
            rows: trace
                .entries
                .iter()
                .map(|e| TraceRow {
                    heat_index: e.heat_index,
                    predicted_f_steel: e.predicted_f_steel,
                    predicted_numerator: e.predicted_numerator,
                    predicted_denominator: e.predicted_denominator,
                    innovation: e.innovation,
                    innovation_variance: e.innovation_variance,
                    negative_estimate: e.negative_estimate,
                    reflected_points: e.reflected_points,
                    mean: e.posterior_mean.clone(),
                    var: Some(e.posterior_var.clone()),
                })
                .collect(),
        }
    }

    pub fn from_window_estimates(
        est: &[WindowEstimate],
        heats: &[HeatRecord],
        element: &ElementSpec,
        catalog: &ScrapCatalog,
        fixed_ell: f64,
    ) -> Self {
        Self {
            element: element.clone(),
            scrap_ids: catalog.ids().to_vec(),
            rows: est
                .iter()
                .map(|e| {
                    let h = &heats[e.position];
                    let num = h.scrap_element_mass(e.alpha.as_slice()) + h.hot_metal_element_mass();
                    let den = if element.transfers_to_slag {
                        h.m_steel + h.m_slag * fixed_ell
                    } else {
                        h.m_steel
                    };
                    TraceRow {
                        heat_index: e.heat_index,
                        predicted_f_steel: e.predicted_f_steel,
                        predicted_numerator: num,
                        predicted_denominator: den,
                        innovation: None,
                        innovation_variance: None,
                        negative_estimate: false,
                        reflected_points: 0,
                        mean: e.alpha.clone(),
                        var: None,
                    }
                })
                .collect(),
        }
    }
}

impl TraceView for TraceTable {
    fn rows(&self) -> usize {
        self.rows.len()
    }

    fn n_scrap(&self) -> usize {
        self.scrap_ids.len()
    }

    fn heat_index(&self, row: usize) -> u64 {
        self.rows[row].heat_index
    }

    fn predicted_f_steel(&self, row: usize) -> Option<f64> {
        self.rows[row].predicted_f_steel
    }

    fn predicted_parts(&self, row: usize) -> (f64, f64) {
        (
            self.rows[row].predicted_numerator,
            self.rows[row].predicted_denominator,
        )
    }

    fn posterior_mean(&self, row: usize) -> &DVector<f64> {
        &self.rows[row].mean
    }

    fn posterior_var(&self, row: usize) -> Option<&DVector<f64>> {
        self.rows[row].var.as_ref()
    }
}

/// Position in `heats` of every trace row, matched on `heat_index`.
/// Both sequences must be increasing; the trace may skip heats.
pub fn align<T: TraceView + ?Sized>(trace: &T, heats: &[HeatRecord]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(trace.rows());
    let mut pos = 0;
    for r in 0..trace.rows() {
        let idx = trace.heat_index(r);
        while pos < heats.len() && heats[pos].heat_index < idx {
            pos += 1;
        }
        if pos == heats.len() || heats[pos].heat_index != idx {
            return Err(Error::Misaligned(format!(
                "trace heat {idx} has no matching heat"
            )));
        }
        out.push(pos);
        pos += 1;
    }
    Ok(out)
}

/// `e_t = predicted - measured` in ppm for heats at positions `>= burn_in`,
/// skipping heats without a measurement or a prediction.
pub fn prediction_errors<T: TraceView + ?Sized>(
    trace: &T,
    heats: &[HeatRecord],
    burn_in: usize,
) -> Result<Vec<f64>> {
    check_burn_in(burn_in, heats.len())?;
    let positions = align(trace, heats)?;
    Ok(positions
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= burn_in)
        .filter_map(|(r, &p)| Some(to_ppm(trace.predicted_f_steel(r)? - heats[p].f_steel?)))
        .collect())
}

/// Errors of the predicted numerator (g) and denominator (t) against true
/// values in kg per heat, over the same heats as [`prediction_errors`].
pub fn part_errors<T: TraceView + ?Sized>(
    trace: &T,
    heats: &[HeatRecord],
    truth_parts: &[(f64, f64)],
    burn_in: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if truth_parts.len() != heats.len() {
        return Err(Error::Misaligned("truth and heats lengths differ".into()));
    }
    check_burn_in(burn_in, heats.len())?;
    let positions = align(trace, heats)?;
    let mut num = Vec::new();
    let mut den = Vec::new();
    for (r, &p) in positions.iter().enumerate() {
        if p < burn_in || trace.predicted_f_steel(r).is_none() || heats[p].f_steel.is_none() {
            continue;
        }
        let (pn, pd) = trace.predicted_parts(r);
        let (tn, td) = truth_parts[p];
        num.push((pn - tn) * G_PER_KG);
        den.push((pd - td) / KG_PER_TONNE);
    }
    Ok((num, den))
}

/// Error summary against the measurements in `heats`, with numerator and
/// denominator errors when true parts are given.
pub fn evaluate<T: TraceView + ?Sized>(
    trace: &T,
    heats: &[HeatRecord],
    truth_parts: Option<&[(f64, f64)]>,
    burn_in: usize,
) -> Result<ErrorSummary> {
    let e = prediction_errors(trace, heats, burn_in)?;
    let mut s = summarize(&e, burn_in)?;
    if let Some(parts) = truth_parts {
        let (num, den) = part_errors(trace, heats, parts, burn_in)?;
        let (n, d) = (moments(&num)?, moments(&den)?);
        s.parts = Some(PartsSummary {
            numerator_mean_g: n.mean,
            numerator_sd_g: n.sd,
            denominator_mean_t: d.mean,
            denominator_sd_t: d.sd,
        });
    }
    Ok(s)
}

/// [`evaluate`] on a synthetic dataset.
pub fn evaluate_trace<T: TraceView + ?Sized>(
    trace: &T,
    dataset: &SyntheticDataset,
    burn_in: usize,
) -> Result<ErrorSummary> {
    let parts = dataset.true_fraction_parts();
    evaluate(trace, &dataset.heats, parts.as_deref(), burn_in)
}

/// Movement of one scrap-type estimate over time, ppm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Volatility {
    /// Standard deviation over time of the posterior mean (headline figure).
    pub mean_series_sd_ppm: f64,
    /// Posterior standard deviation averaged over time (NaN without variances).
    pub posterior_sd_mean_ppm: f64,
}

/// Volatility of `component` over the heats at positions `>= burn_in`.
pub fn volatility<T: TraceView + ?Sized>(
    trace: &T,
    heats: &[HeatRecord],
    component: usize,
    burn_in: usize,
) -> Result<Volatility> {
    if component >= trace.n_scrap() {
        return Err(Error::Domain(format!(
            "component {component} outside {} scrap types",
            trace.n_scrap()
        )));
    }
    check_burn_in(burn_in, heats.len())?;
    let rows: Vec<usize> = align(trace, heats)?
        .into_iter()
        .enumerate()
        .filter(|(_, p)| *p >= burn_in)
        .map(|(r, _)| r)
        .collect();
    let means: Vec<f64> = rows
        .iter()
        .map(|&r| to_ppm(trace.posterior_mean(r)[component]))
        .collect();
    let sd_sum: Option<f64> = rows
        .iter()
        .map(|&r| {
            trace
                .posterior_var(r)
                .map(|v| to_ppm(v[component].max(0.0).sqrt()))
        })
        .sum();
    Ok(Volatility {
        mean_series_sd_ppm: moments(&means)?.sd,
        posterior_sd_mean_ppm: sd_sum.map_or(f64::NAN, |s| s / rows.len() as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub inside: usize,
    pub total: usize,
}

impl Coverage {
    pub fn share(&self) -> f64 {
        self.inside as f64 / self.total as f64
    }
}

/// Band `mean ± 2 sd`, computed the same way for files and memory.
pub fn band(mean: f64, var: f64) -> (f64, f64) {
    let half = 2.0 * var.max(0.0).sqrt();
    (mean - half, mean + half)
}

/// Share of true scrap fractions inside the posterior `±2 sd` band, over all
/// scrap types and the heats at positions `>= burn_in`.
pub fn coverage<T: TraceView + ?Sized>(
    trace: &T,
    heats: &[HeatRecord],
    truth_alpha: &[DVector<f64>],
    burn_in: usize,
) -> Result<Coverage> {
    if truth_alpha.len() != heats.len() {
        return Err(Error::Misaligned("truth and heats lengths differ".into()));
    }
    check_burn_in(burn_in, heats.len())?;
    let positions = align(trace, heats)?;
    let mut c = Coverage {
        inside: 0,
        total: 0,
    };
    for (r, &p) in positions.iter().enumerate().filter(|(_, &p)| p >= burn_in) {
        let var = trace
            .posterior_var(r)
            .ok_or_else(|| Error::Config("coverage needs posterior variances".into()))?;
        let mean = trace.posterior_mean(r);
        let a = &truth_alpha[p];
        for i in 0..trace.n_scrap() {
            let (lo, hi) = band(mean[i], var[i]);
            c.total += 1;
            c.inside += (lo <= a[i] && a[i] <= hi) as usize;
        }
    }
    Ok(c)
}

/// Hyperparameter varied in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Process-noise mean `q` and the initial mean together.
    Q,
    /// Observation variance.
    H,
    /// `gamma` with `Q` held fixed.
    GammaFixedQ,
    /// `gamma` with the stationary covariance held fixed; `Q` is recomputed
    /// and the initial covariance follows it.
    GammaFixedStationary,
    /// Partition mean `q_c` and the initial partition mean.
    PartitionMean,
    /// Partition process-noise covariance.
    PartitionCov,
    /// Sigma-point spread.
    K,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "q" => Self::Q,
            "h" | "H" => Self::H,
            "gamma-q" | "gamma-fixed-q" => Self::GammaFixedQ,
            "gamma-pinf" | "gamma-fixed-stationary" => Self::GammaFixedStationary,
            "qc" | "q_c" => Self::PartitionMean,
            "Qc" | "Q_c" | "qc-cov" => Self::PartitionCov,
            "k" => Self::K,
            other => return Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Q => "q",
            Self::H => "H",
            Self::GammaFixedQ => "gamma-q",
            Self::GammaFixedStationary => "gamma-pinf",
            Self::PartitionMean => "qc",
            Self::PartitionCov => "Qc",
            Self::K => "k",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub burn_in: usize,
    /// Scrap type whose volatility is reported.
    pub volatility_component: usize,
    pub options: FilterOptions,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            burn_in: DEFAULT_BURN_IN,
            volatility_component: 35,
            options: FilterOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub multiplier: f64,
    pub summary: ErrorSummary,
    pub volatility: Volatility,
}

/// Filter hyperparameters and initial belief with one axis scaled.
pub fn scaled_setup(
    base: &NoiseSpec,
    options: FilterOptions,
    axis: SweepAxis,
    multiplier: f64,
) -> Result<(NoiseSpec, GaussianBelief, FilterOptions)> {
    if !(multiplier > 0.0 && multiplier.is_finite()) {
        return Err(Error::Domain(format!(
            "multiplier {multiplier} must be positive"
        )));
    }
    let mut spec = base.clone();
    let mut opts = options;
    match axis {
        SweepAxis::Q => spec.mean *= multiplier,
        SweepAxis::H => spec.obs_var *= multiplier,
        SweepAxis::GammaFixedQ => spec.gamma = checked_gamma(base.gamma * multiplier)?,
        SweepAxis::GammaFixedStationary => {
            let p_inf = stationary_covariance(base.gamma, &base.cov_diag)?;
            spec.gamma = checked_gamma(base.gamma * multiplier)?;
            spec.cov_diag = process_noise_from_stationary(spec.gamma, &p_inf)?;
            if let Some(p) = spec.partition.as_mut() {
                let p_inf_c = stationary_covariance(base.gamma, &p.cov_diag)?;
                p.cov_diag = process_noise_from_stationary(spec.gamma, &p_inf_c)?;
            }
        }
        SweepAxis::PartitionMean | SweepAxis::PartitionCov => {
            let p = spec.partition.as_mut().ok_or_else(|| {
                Error::Config("partition sweep on a model without partition noise".into())
            })?;
            if axis == SweepAxis::PartitionMean {
                p.mean *= multiplier;
            } else {
                p.cov_diag *= multiplier;
            }
        }
        SweepAxis::K => {
            opts.spread = match options.spread {
                Spread::Fixed(k) => Spread::Fixed(k * multiplier),
                Spread::TotalEquals(t) => Spread::TotalEquals(t * multiplier),
            }
        }
    }
    let init = spec.default_initial_belief();
    Ok((spec, init, opts))
}

fn checked_gamma(g: f64) -> Result<f64> {
    if !(g > 0.0 && g <= 1.0) {
        return Err(Error::Domain(format!("scaled gamma {g} outside (0, 1]")));
    }
    Ok(g)
}

/// Reruns the filter on `dataset` with one hyperparameter scaled by each
/// multiplier. Rows come back in multiplier order.
pub fn misspecification_sweep(
    dataset: &SyntheticDataset,
    base: &NoiseSpec,
    axis: SweepAxis,
    multipliers: &[f64],
    settings: &SweepSettings,
) -> Result<Vec<SweepRow>> {
    if multipliers.is_empty() {
        return Err(Error::Config("no multipliers given".into()));
    }
    let component = settings.volatility_component.min(base.n_scrap() - 1);
    multipliers
        .par_iter()
        .map(|&mult| {
            let (spec, init, opts) = scaled_setup(base, settings.options, axis, mult)?;
            let trace = run_filter(&dataset.heats, &dataset.element, &spec, Some(init), opts)?;
            Ok(SweepRow {
                multiplier: mult,
                summary: evaluate_trace(&trace, dataset, settings.burn_in)?,
                volatility: volatility(&trace, &dataset.heats, component, settings.burn_in)?,
            })
        })
        .collect()
}

/// One point of a long-format plot series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub series: String,
    pub t: u64,
    pub value: f64,
}

/// Plot series of a run: per scrap type the estimate, its `±2 sd` band
/// (when variances exist), usage (1 when charged), the truth when known, and
/// the partition parameters when the state carries them. Values are plain
/// fractions; `t` is the heat index.
pub fn trace_series<T: TraceView + ?Sized>(
    trace: &T,
    catalog: &ScrapCatalog,
    heats: &[HeatRecord],
    truth: Option<&SyntheticDataset>,
) -> Result<Vec<SeriesPoint>> {
    if catalog.len() != trace.n_scrap() {
        return Err(Error::Misaligned("catalog does not match the trace".into()));
    }
    if truth.is_some_and(|d| d.truth_alpha.len() != heats.len()) {
        return Err(Error::Misaligned("truth and heats lengths differ".into()));
    }
    let positions = align(trace, heats)?;
    let n = trace.n_scrap();
    let mut names: Vec<String> = catalog.ids().to_vec();
    if trace.rows() > 0 && trace.posterior_mean(0).len() >= n + 2 {
        names.extend(["c1".to_string(), "c2".to_string()]);
    }
    let mut out = Vec::new();
    for (i, id) in names.iter().enumerate() {
        for (r, &p) in positions.iter().enumerate() {
            let t = trace.heat_index(r);
            let mean = trace.posterior_mean(r)[i];
            out.push(SeriesPoint {
                series: format!("estimate_{id}"),
                t,
                value: mean,
            });
            if let Some(var) = trace.posterior_var(r) {
                let (lo, hi) = band(mean, var[i]);
                out.push(SeriesPoint {
                    series: format!("lower_{id}"),
                    t,
                    value: lo,
                });
                out.push(SeriesPoint {
                    series: format!("upper_{id}"),
                    t,
                    value: hi,
                });
            }
            let truth_value = truth.and_then(|d| {
                if i < n {
                    Some(d.truth_alpha[p][i])
                } else {
                    d.truth_c.as_ref().map(|c| c[p][i - n])
                }
            });
            if let Some(v) = truth_value {
                out.push(SeriesPoint {
                    series: format!("truth_{id}"),
                    t,
                    value: v,
                });
            }
            if i < n {
                let used = if heats[p].scrap_mass[i] > 0.0 {
                    1.0
                } else {
                    0.0
                };
                out.push(SeriesPoint {
                    series: format!("usage_{id}"),
                    t,
                    value: used,
                });
            }
        }
    }
    Ok(out)
}

/// Coverage recomputed from exported series: truth points inside the
/// matching lower/upper band, for scrap types only and `t > after_t`.
pub fn coverage_from_series(
    points: &[SeriesPoint],
    catalog: &ScrapCatalog,
    after_t: u64,
) -> Coverage {
    use std::collections::HashMap;
    let mut lookup: HashMap<(&str, u64), f64> = HashMap::new();
    for p in points {
        lookup.insert((p.series.as_str(), p.t), p.value);
    }
    let mut c = Coverage {
        inside: 0,
        total: 0,
    };
    for id in catalog.ids() {
        let (tn, ln, un) = (
            format!("truth_{id}"),
            format!("lower_{id}"),
            format!("upper_{id}"),
        );
        for p in points.iter().filter(|p| p.series == tn && p.t > after_t) {
            if let (Some(lo), Some(hi)) = (
                lookup.get(&(ln.as_str(), p.t)),
                lookup.get(&(un.as_str(), p.t)),
            ) {
                c.total += 1;
                c.inside += (*lo <= p.value && p.value <= *hi) as usize;
            }
        }
    }
    c
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

pub fn write_series_csv(path: &Path, points: &[SeriesPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["series", "t", "value"])
        .map_err(|e| Error::csv(path, e))?;
    for p in points {
        w.write_record([p.series.as_str(), &p.t.to_string(), &format_f64(p.value)])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_series_csv(path: &Path) -> Result<Vec<SeriesPoint>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::csv(path, e)))
        .collect()
}

/// Labelled summary rows as CSV.
pub fn write_summary_csv(path: &Path, rows: &[(String, ErrorSummary)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([
        "label",
        "mean_error_ppm",
        "std_error_ppm",
        "n",
        "burn_in",
        "numerator_mean_g",
        "numerator_sd_g",
        "denominator_mean_t",
        "denominator_sd_t",
    ])
    .map_err(|e| Error::csv(path, e))?;
    for (label, s) in rows {
        let p = s.parts;
        let opt = |f: fn(&PartsSummary) -> f64| p.as_ref().map(f).map_or(String::new(), format_f64);
        w.write_record([
            label.clone(),
            format_f64(s.mean_error_ppm),
            format_f64(s.std_error_ppm),
            s.n.to_string(),
            s.burn_in.to_string(),
            opt(|p| p.numerator_mean_g),
            opt(|p| p.numerator_sd_g),
            opt(|p| p.denominator_mean_t),
            opt(|p| p.denominator_sd_t),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Sweep table: one row per multiplier.
pub fn write_sweep_csv(path: &Path, axis: SweepAxis, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([
        "axis",
        "multiplier",
        "mean_error_ppm",
        "std_error_ppm",
        "n",
        "estimate_sd_ppm",
        "posterior_sd_ppm",
    ])
    .map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record([
            axis.name().to_string(),
            format_f64(r.multiplier),
            format_f64(r.summary.mean_error_ppm),
            format_f64(r.summary.std_error_ppm),
            r.summary.n.to_string(),
            format_f64(r.volatility.mean_series_sd_ppm),
            format_f64(r.volatility.posterior_sd_mean_ppm),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `summary.csv` and `series.csv` into `dir`.
pub fn export_report(
    dir: &Path,
    summaries: &[(String, ErrorSummary)],
    series: &[SeriesPoint],
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_summary_csv(&dir.join("summary.csv"), summaries)?;
    write_series_csv(&dir.join("series.csv"), series)
}
