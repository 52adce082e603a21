use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use scrapcomp::config::RunConfig;
use scrapcomp::eval::SweepAxis;
use scrapcomp::pipeline::{self, CommandOutput, FitMode};
use scrapcomp::Error;

#[derive(Parser)]
#[command(
    name = "scrapcomp",
    version,
    about = "Scrap composition estimation from heat records"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resolve noise hyperparameters and write noise.json.
    DeriveParams(Common),
    /// Generate a synthetic dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_heats: Option<usize>,
        /// Heats CSV supplying the masses.
        #[arg(long)]
        masses: Option<PathBuf>,
    },
    /// Run an estimator and write a trace.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Compute error statistics and plot series of a trace.
    Evaluate(Common),
    /// Re-run the filter with one hyperparameter scaled.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// q, H, gamma-q, gamma-pinf, qc, Qc or k.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        multipliers: Vec<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Kalman,
    Ukf,
    Nnls,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    element: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    n_scrap: Option<usize>,
    #[arg(long)]
    heats: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> scrapcomp::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?;
                RunConfig::from_json(&text)?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr, $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = Some(v);
                }
            };
        }
        set!(self.element, cfg.element);
        set!(self.seed, cfg.seed);
        set!(self.out, cfg.paths.out);
        set!(self.burn_in, cfg.burn_in);
        set!(self.window, cfg.window.window);
        set!(self.n_scrap, cfg.n_scrap);
        set!(self.heats, cfg.paths.heats);
        set!(self.truth, cfg.paths.truth);
        set!(self.noise, cfg.paths.noise);
        set!(self.trace, cfg.paths.trace);
        if let Some(k) = self.k {
            cfg.noise.k = Some(k);
            cfg.noise.spread_total = None;
        }
        let out = cfg.out_dir();
        std::fs::create_dir_all(&out).map_err(|e| Error::Io {
            path: out,
            source: e,
        })?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> scrapcomp::Result<CommandOutput> {
    match cli.command {
        Command::DeriveParams(c) => pipeline::derive_params(&c.load()?),
        Command::Simulate {
            common,
            n_heats,
            masses,
        } => {
            let mut cfg = common.load()?;
            if n_heats.is_some() {
                cfg.simulation.n_heats = n_heats;
            }
            if masses.is_some() {
                cfg.simulation.masses = masses;
            }
            pipeline::simulate(&cfg)
        }
        Command::Fit { common, mode } => {
            let cfg = common.load()?;
            let mode = match mode {
                Some(Mode::Kalman) => FitMode::Kalman,
                Some(Mode::Ukf) => FitMode::Ukf,
                Some(Mode::Nnls) => FitMode::Nnls,
                None => FitMode::filter_for(&cfg.element()?),
            };
            pipeline::fit(&cfg, mode)
        }
        Command::Evaluate(c) => pipeline::evaluate_run(&c.load()?),
        Command::Sweep {
            common,
            axis,
            multipliers,
        } => {
            let cfg = common.load()?;
            pipeline::sweep(&cfg, SweepAxis::parse(&axis)?, &multipliers)
        }
    }
}

fn details(err: &Error) -> Value {
    match err {
        Error::Parse { path, errors } => json!({
            "path": path.display().to_string(),
            "errors": errors.iter().map(|e| json!({"line": e.line, "message": e.message})).collect::<Vec<_>>(),
        }),
        Error::Dimension {
            what,
            expected,
            got,
        } => json!({"what": what, "expected": expected, "got": got}),
        Error::MomentMatching {
            index,
            mean,
            variance,
        } => {
            json!({"index": index, "mean": mean, "variance": variance})
        }
        Error::InvalidHeat { heat_index, reason } => {
            json!({"heat_index": heat_index, "reason": reason})
        }
        Error::Partition {
            heat_index,
            denominator,
        } => json!({"heat_index": heat_index, "denominator": denominator}),
        Error::SolverNonConvergence {
            iterations,
            kkt_violation,
        } => json!({"iterations": iterations, "kkt_violation": kkt_violation}),
        Error::TooFewSamples { needed, got } => json!({"needed": needed, "got": got}),
        Error::Io { path, .. } | Error::Csv { path, .. } | Error::Json { path, .. } => {
            json!({"path": path.display().to_string()})
        }
        _ => Value::Null,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            for f in &out.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report =
                json!({"error": e.kind(), "message": e.to_string(), "details": details(&e)});
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
