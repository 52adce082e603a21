//! Parameter recipes and the commands behind the command-line interface.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

use crate::baseline::windowed_nnls;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    coverage, evaluate, export_report, misspecification_sweep, trace_series, volatility,
    write_sweep_csv, Coverage, ErrorSummary, SweepAxis, SweepSettings, TraceTable, Volatility,
};
use crate::filters::run_filter;
use crate::io::{
    dataset_from_files, load_heats, load_noise, load_trace, load_truth, save_heats, save_json,
    save_noise, save_trace, save_truth, HeatTable, Manifest,
};
use crate::model::{
    estimate_obs_variance_linear, gamma_from_half_life, process_noise_from_stationary, ElementSpec,
    NoiseSpec, ScrapCatalog,
};
use crate::synth::surrogate::{generate_heat_masses, nominal_hot_metal_fraction, SurrogateConfig};
use crate::synth::{generate_dataset, representative_means, stream_rng, Stream, SyntheticDataset};

/// Half-life of the composition drift, heats.
pub const HALF_LIFE_HEATS: f64 = 1000.0;
/// Stationary sd of each scrap fraction relative to its mean.
pub const STATIONARY_REL_SD: f64 = 0.042;
pub const PARTITION_MEAN: [f64; 2] = [9.7, 0.01];
/// Stationary sd of each partition parameter relative to its mean.
pub const PARTITION_STATIONARY_REL_SD: f64 = 0.01;
/// Typical tapped steel and hot-metal masses, kg.
pub const TYPICAL_STEEL_KG: f64 = 330e3;
pub const TYPICAL_HOT_METAL_KG: f64 = 280e3;

/// Observation variance used for synthetic data, kg².
///
/// Linear elements: steel measurement sd 12 ppm and hot-metal sd 5 ppm.
/// Slag elements: 4 ppm on the steel only.
pub fn synthetic_obs_var(element: &ElementSpec) -> f64 {
    if element.transfers_to_slag {
        estimate_obs_variance_linear(TYPICAL_STEEL_KG, 4e-6, 0.0, 0.0)
    } else {
        estimate_obs_variance_linear(TYPICAL_STEEL_KG, 12e-6, TYPICAL_HOT_METAL_KG, 5e-6)
    }
}

/// `Q` (or `Q_c`) from a stationary sd proportional to the mean.
pub fn process_noise_for_rel_sd(
    gamma: f64,
    mean: &DVector<f64>,
    rel_sd: f64,
) -> Result<DVector<f64>> {
    let p_inf = mean.map(|q| (rel_sd * q).powi(2));
    process_noise_from_stationary(gamma, &p_inf)
}

/// Hyperparameters used to generate synthetic data around the mean vector `q`.
pub fn synthetic_noise_spec(element: &ElementSpec, q: DVector<f64>) -> Result<NoiseSpec> {
    let gamma = gamma_from_half_life(HALF_LIFE_HEATS)?;
    let q_cov = process_noise_for_rel_sd(gamma, &q, STATIONARY_REL_SD)?;
    let spec = NoiseSpec::new(gamma, q, q_cov, synthetic_obs_var(element))?;
    if element.transfers_to_slag {
        let q_c = DVector::from_column_slice(&PARTITION_MEAN);
        let q_c_cov = process_noise_for_rel_sd(gamma, &q_c, PARTITION_STATIONARY_REL_SD)?;
        spec.with_partition(q_c, q_c_cov)
    } else {
        Ok(spec)
    }
}

/// Synthetic dataset over surrogate heat masses, with the representative
/// means of `element` and the synthetic noise recipe.
pub fn surrogate_dataset(
    element: &ElementSpec,
    n_scrap: usize,
    n_heats: usize,
    seed: u64,
    cfg: &SurrogateConfig,
) -> Result<SyntheticDataset> {
    let catalog = ScrapCatalog::numbered(n_scrap)?;
    let q = representative_means(&element.id, n_scrap)?;
    let spec = synthetic_noise_spec(element, q)?;
    let mut rng = stream_rng(seed, Stream::HeatMasses);
    let masses = generate_heat_masses(
        n_scrap,
        n_heats,
        nominal_hot_metal_fraction(&element.id),
        cfg,
        &mut rng,
    )?;
    generate_dataset(&catalog, element, &spec, None, &masses, seed)
}

/// Estimator used by `fit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    Kalman,
    Ukf,
    Nnls,
}

impl FitMode {
    pub fn name(&self) -> &'static str {
        match self {
            FitMode::Kalman => "kalman",
            FitMode::Ukf => "ukf",
            FitMode::Nnls => "nnls",
        }
    }

    /// The filter matching an element's observation model.
    pub fn filter_for(element: &ElementSpec) -> Self {
        if element.transfers_to_slag {
            FitMode::Ukf
        } else {
            FitMode::Kalman
        }
    }
}

/// Files written by a command and warnings raised on the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn finish(
    cfg: &RunConfig,
    command: &str,
    files: Vec<PathBuf>,
    warnings: Vec<String>,
) -> Result<CommandOutput> {
    let names = files
        .iter()
        .map(|f| {
            f.file_name()
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
        })
        .collect();
    let manifest = Manifest::new(command, &cfg.canonical_json(), Some(cfg.seed()), names);
    let path = cfg.out_dir().join(format!("{command}.manifest.json"));
    save_json(&path, &manifest)?;
    let mut files = files;
    files.push(path);
    Ok(CommandOutput { files, warnings })
}

fn heats_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths
        .heats
        .clone()
        .unwrap_or_else(|| cfg.out_dir().join("heats.csv"))
}

fn noise_for(cfg: &RunConfig, table: Option<&HeatTable>) -> Result<(NoiseSpec, Vec<String>)> {
    match &cfg.paths.noise {
        Some(p) => Ok((load_noise(p)?, Vec::new())),
        None => {
            let n = table.map_or(cfg.n_scrap(), |t| t.catalog.len());
            cfg.resolve_noise(n, table.map(|t| t.heats.as_slice()))
        }
    }
}

/// Resolves the noise recipe and writes `noise.json`.
pub fn derive_params(cfg: &RunConfig) -> Result<CommandOutput> {
    let table = cfg.paths.heats.as_deref().map(load_heats).transpose()?;
    let (spec, warnings) = noise_for(cfg, table.as_ref())?;
    spec.beta_params()?;
    let path = cfg.out_dir().join("noise.json");
    save_noise(&path, &spec)?;
    finish(cfg, "derive-params", vec![path], warnings)
}

/// Generates a synthetic dataset: `heats.csv`, `truth.csv`, `noise.json`.
pub fn simulate(cfg: &RunConfig) -> Result<CommandOutput> {
    let element = cfg.element()?;
    let seed = cfg.seed();
    let (catalog, masses) = match &cfg.simulation.masses {
        Some(p) => {
            let t = load_heats(p)?;
            let heats = match cfg.simulation.n_heats {
                Some(n) => t.heats.into_iter().take(n).collect(),
                None => t.heats,
            };
            (t.catalog, heats)
        }
        None => {
            let n = cfg.n_scrap();
            let surrogate = cfg.simulation.surrogate.clone().unwrap_or_default();
            let mut rng = stream_rng(seed, Stream::HeatMasses);
            let heats = generate_heat_masses(
                n,
                cfg.simulation.n_heats.unwrap_or(20000),
                nominal_hot_metal_fraction(&element.id),
                &surrogate,
                &mut rng,
            )?;
            (ScrapCatalog::numbered(n)?, heats)
        }
    };
    let (spec, warnings) = match &cfg.paths.noise {
        Some(p) => (load_noise(p)?, Vec::new()),
        None => cfg.resolve_noise(catalog.len(), None)?,
    };
    let dataset = generate_dataset(&catalog, &element, &spec, None, &masses, seed)?;
    let dir = cfg.out_dir();
    let files = vec![
        dir.join("heats.csv"),
        dir.join("truth.csv"),
        dir.join("noise.json"),
    ];
    save_heats(&files[0], &catalog, &dataset.heats)?;
    save_truth(&files[1], &dataset)?;
    save_noise(&files[2], &spec)?;
    finish(cfg, "simulate", files, warnings)
}

/// Runs an estimator over the heats and writes `trace_<mode>.csv`.
pub fn fit(cfg: &RunConfig, mode: FitMode) -> Result<CommandOutput> {
    let element = cfg.element()?;
    match (mode, element.transfers_to_slag) {
        (FitMode::Kalman, true) => {
            return Err(Error::Config(format!(
                "{} partitions into the slag; use --mode ukf",
                element.id
            )))
        }
        (FitMode::Ukf, false) => {
            return Err(Error::Config(format!(
                "{} stays in the steel; use --mode kalman",
                element.id
            )))
        }
        _ => {}
    }
    let table = load_heats(&heats_path(cfg))?;
    let (table_out, warnings) = if mode == FitMode::Nnls {
        let wcfg = cfg.window_config()?;
        let est = windowed_nnls(&table.heats, &element, &wcfg)?;
        (
            TraceTable::from_window_estimates(
                &est,
                &table.heats,
                &element,
                &table.catalog,
                wcfg.fixed_ell,
            ),
            Vec::new(),
        )
    } else {
        let (spec, warnings) = noise_for(cfg, Some(&table))?;
        let trace = run_filter(&table.heats, &element, &spec, None, cfg.filter_options()?)?;
        (
            TraceTable::from_filter_trace(&trace, &table.catalog),
            warnings,
        )
    };
    let path = cfg.out_dir().join(format!("trace_{}.csv", mode.name()));
    save_trace(&path, &table_out)?;
    finish(cfg, "fit", vec![path], warnings)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub trace: String,
    pub summary: ErrorSummary,
    pub volatility_component: String,
    pub volatility: Volatility,
    pub coverage: Option<Coverage>,
}

fn load_dataset(cfg: &RunConfig, table: HeatTable, truth: &Path) -> Result<SyntheticDataset> {
    let (spec, _) = noise_for(cfg, Some(&table))?;
    dataset_from_files(
        table,
        load_truth(truth)?,
        &cfg.element()?,
        &spec,
        cfg.seed(),
    )
}

/// Error statistics and plot series of a trace: `summary.csv`,
/// `series.csv`, `evaluation.json`.
pub fn evaluate_run(cfg: &RunConfig) -> Result<CommandOutput> {
    let element = cfg.element()?;
    let trace_path = cfg.paths.trace.clone().unwrap_or_else(|| {
        cfg.out_dir().join(format!(
            "trace_{}.csv",
            FitMode::filter_for(&element).name()
        ))
    });
    let table = load_heats(&heats_path(cfg))?;
    let trace = load_trace(&trace_path, &element)?;
    if trace.scrap_ids != table.catalog.ids() {
        return Err(Error::Misaligned(
            "trace and heats have different scrap types".into(),
        ));
    }
    let catalog = table.catalog.clone();
    let dataset = cfg
        .paths
        .truth
        .as_deref()
        .map(|p| load_dataset(cfg, table.clone(), p))
        .transpose()?;
    let burn_in = cfg.burn_in();
    let parts = dataset.as_ref().and_then(|d| d.true_fraction_parts());
    let summary = evaluate(&trace, &table.heats, parts.as_deref(), burn_in)?;
    let component = 35.min(catalog.len() - 1);
    let vol = volatility(&trace, &table.heats, component, burn_in)?;
    let cov = match (&dataset, trace.rows.first().and_then(|r| r.var.as_ref())) {
        (Some(d), Some(_)) => Some(coverage(&trace, &table.heats, &d.truth_alpha, burn_in)?),
        _ => None,
    };
    let label = trace_path
        .file_stem()
        .map_or_else(|| "trace".to_string(), |s| s.to_string_lossy().into_owned());
    let series = trace_series(&trace, &catalog, &table.heats, dataset.as_ref())?;
    let dir = cfg.out_dir();
    export_report(&dir, &[(label.clone(), summary)], &series)?;
    let eval_path = dir.join("evaluation.json");
    save_json(
        &eval_path,
        &Evaluation {
            trace: label,
            summary,
            volatility_component: catalog.ids()[component].clone(),
            volatility: vol,
            coverage: cov,
        },
    )?;
    finish(
        cfg,
        "evaluate",
        vec![dir.join("summary.csv"), dir.join("series.csv"), eval_path],
        Vec::new(),
    )
}

/// Misspecification sweep on a synthetic dataset: `sweep_<axis>.csv`.
pub fn sweep(cfg: &RunConfig, axis: SweepAxis, multipliers: &[f64]) -> Result<CommandOutput> {
    let truth = cfg
        .paths
        .truth
        .clone()
        .unwrap_or_else(|| cfg.out_dir().join("truth.csv"));
    let dataset = load_dataset(cfg, load_heats(&heats_path(cfg))?, &truth)?;
    let settings = SweepSettings {
        burn_in: cfg.burn_in(),
        volatility_component: 35.min(dataset.catalog.len() - 1),
        options: cfg.filter_options()?,
    };
    let rows = misspecification_sweep(&dataset, &dataset.noise, axis, multipliers, &settings)?;
    let path = cfg.out_dir().join(format!("sweep_{}.csv", axis.name()));
    write_sweep_csv(&path, axis, &rows)?;
    finish(cfg, "sweep", vec![path], Vec::new())
}
