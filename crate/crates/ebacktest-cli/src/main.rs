//! Command-line front door: simulate scenarios, backtest external CSV data,
//! and run experiment suites.

mod config;
mod suites;

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use ebacktest::betting::Law;
use ebacktest::harness::report::write_trajectory_csv;
use ebacktest::harness::{run_backtest, BacktestRun, Measure};
use ebacktest::timeseries::generate_stream;
use ebacktest::{BacktestRecord, BettingStrategy, DetectionThresholds};

use config::parse_scenario_config;
use suites::{run_suite, SuiteOptions};

const DEFAULT_SEED: u64 = 20231207;

/// Error classes map to distinct exit codes: 2 config, 3 schema, 4 data or
/// numeric failure, 1 anything else.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Schema(String),
    Data(String),
    Other(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Schema(m) => write!(f, "schema error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Schema(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "ebacktest",
    version,
    about = "Anytime-valid e-process backtesting of VaR and Expected Shortfall"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario config and write (t, loss, forecasts, truth) CSV.
    Simulate {
        /// Key-value scenario config file.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Seed; falls back to the config file, then $EBACKTEST_SEED.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Backtest a CSV of losses and risk forecasts.
    Backtest {
        /// Input CSV with columns: index/date, loss, var_forecast
        /// [, es_forecast].
        #[arg(long)]
        input: PathBuf,
        /// Which risk measure the primary forecast reports.
        #[arg(long, value_parser = ["var", "es"])]
        measure: String,
        /// Probability level of the reported measures.
        #[arg(long, default_value_t = 0.975)]
        level: f64,
        /// Betting rule: gro|gree|grel|grem|taylor-gree|taylor-grel|
        /// taylor-grem|fixed.
        #[arg(long, default_value = "grem")]
        method: String,
        /// Cap on the betting fraction.
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        /// Rolling window (days) for the betting rule; all history if absent.
        #[arg(long)]
        window: Option<usize>,
        /// Days with a forced zero stake at the start.
        #[arg(long, default_value_t = 0)]
        warmup: usize,
        /// Stake for --method fixed.
        #[arg(long)]
        lambda: Option<f64>,
        /// Finite-support alternative for --method gro: "loss:weight,...".
        #[arg(long)]
        alternative: Option<String>,
        /// Comma-separated detection thresholds.
        #[arg(long, default_value = "2,5,10")]
        thresholds: String,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Optional per-day trajectory CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run a predefined experiment suite.
    Experiment {
        /// One of: stationary-var, stationary-es, structural, gaming, type1,
        /// example51.
        suite: String,
        /// Replications (desk-scale default varies by suite).
        #[arg(long)]
        reps: Option<usize>,
        /// Base seed; replication r uses seed + r.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Refit interval for fitted forecasters.
        #[arg(long)]
        refit: Option<usize>,
        /// Output directory for table files.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Full-fidelity settings (more reps, daily refits).
        #[arg(long)]
        full: bool,
    },
}

fn env_seed() -> Option<u64> {
    std::env::var("EBACKTEST_SEED").ok()?.parse().ok()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out, seed } => cmd_simulate(&config, &out, seed),
        Command::Backtest {
            input,
            measure,
            level,
            method,
            gamma,
            window,
            warmup,
            lambda,
            alternative,
            thresholds,
            report,
            trajectory,
        } => cmd_backtest(BacktestArgs {
            input,
            measure,
            level,
            method,
            gamma,
            window,
            warmup,
            lambda,
            alternative,
            thresholds,
            report,
            trajectory,
        }),
        Command::Experiment {
            suite,
            reps,
            seed,
            jobs,
            refit,
            out_dir,
            full,
        } => {
            let opts = SuiteOptions {
                reps,
                seed: seed.or_else(env_seed).unwrap_or(DEFAULT_SEED),
                jobs,
                refit,
                out_dir,
                full,
            };
            let files = run_suite(&suite, &opts)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
    }
}

fn cmd_simulate(config_path: &PathBuf, out: &PathBuf, seed: Option<u64>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let (scenario, config_seed) = parse_scenario_config(&text)?;
    let seed = seed
        .or(config_seed)
        .or_else(env_seed)
        .unwrap_or(DEFAULT_SEED);
    let stream = generate_stream(&scenario, seed).map_err(|e| CliError::Data(e.to_string()))?;

    let mut w = csv::Writer::from_writer(File::create(out)?);
    w.write_record([
        "t",
        "loss",
        "var_forecast",
        "es_forecast",
        "true_mu",
        "true_sigma",
    ])
    .map_err(|e| CliError::Other(e.to_string()))?;
    for d in 0..stream.len() {
        w.write_record([
            (d + 1).to_string(),
            format!("{}", stream.losses[d]),
            format!("{}", stream.var_forecasts[d]),
            format!("{}", stream.es_forecasts[d]),
            format!("{}", stream.true_mu[d]),
            format!("{}", stream.true_sigma[d]),
        ])
        .map_err(|e| CliError::Other(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

struct BacktestArgs {
    input: PathBuf,
    measure: String,
    level: f64,
    method: String,
    gamma: f64,
    window: Option<usize>,
    warmup: usize,
    lambda: Option<f64>,
    alternative: Option<String>,
    thresholds: String,
    report: Option<PathBuf>,
    trajectory: Option<PathBuf>,
}

struct InputData {
    keys: Vec<String>,
    records: Vec<BacktestRecord>,
}

fn cmd_backtest(args: BacktestArgs) -> Result<(), CliError> {
    let measure = match args.measure.as_str() {
        "var" => Measure::Var,
        "es" => Measure::Es,
        other => return Err(CliError::Config(format!("unknown measure `{other}`"))),
    };
    let estat = measure
        .estatistic(args.level)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let thresholds = parse_thresholds(&args.thresholds)?;
    let strategy = build_strategy(&args)?;
    let input = read_input(&args.input, measure)?;

    let run = BacktestRun {
        records: input.records,
        estat,
        strategy,
        thresholds,
    };
    let result = run_backtest(&run).map_err(|e| CliError::Data(e.to_string()))?;

    if let Some(path) = &args.trajectory {
        write_trajectory_csv(&result.trajectory, File::create(path)?)
            .map_err(|e| CliError::Other(e.to_string()))?;
    }

    let lambdas: Vec<f64> = result.trajectory.points.iter().map(|p| p.lambda).collect();
    let n_lambda = lambdas.len().max(1) as f64;
    let crossings: Vec<serde_json::Value> = result
        .report
        .thresholds
        .iter()
        .zip(&result.report.crossings)
        .map(|(threshold, crossing)| match crossing {
            Some(c) => serde_json::json!({
                "threshold": threshold,
                "day": c.day,
                "key": input.keys.get(c.day - 1),
                "log_e_value": c.log_wealth,
            }),
            None => serde_json::json!({ "threshold": threshold, "day": null }),
        })
        .collect();
    let report = serde_json::json!({
        "schema_version": 1,
        "input": args.input.display().to_string(),
        "rows": result.trajectory.points.len(),
        "measure": args.measure,
        "level": args.level,
        "method": args.method,
        "gamma": args.gamma,
        "window": args.window,
        "thresholds": result.report.thresholds,
        "crossings": crossings,
        "final_log_e": result.report.final_log_wealth,
        "sup_log_e": result.report.sup_log_wealth,
        "lambda_summary": {
            "mean": lambdas.iter().sum::<f64>() / n_lambda,
            "max": lambdas.iter().cloned().fold(0.0, f64::max),
            "frac_positive": lambdas.iter().filter(|l| **l > 0.0).count() as f64 / n_lambda,
        },
    });
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?;
    match &args.report {
        Some(path) => {
            let mut f = File::create(path)?;
            f.write_all(text.as_bytes())?;
            f.write_all(b"\n")?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn parse_thresholds(text: &str) -> Result<DetectionThresholds, CliError> {
    let levels: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let levels = levels.map_err(|_| {
        CliError::Config(format!(
            "thresholds `{text}` are not a comma-separated number list"
        ))
    })?;
    DetectionThresholds::new(levels).map_err(|e| CliError::Config(e.to_string()))
}

fn build_strategy(args: &BacktestArgs) -> Result<BettingStrategy, CliError> {
    let cfg = |e: &dyn fmt::Display| CliError::Config(e.to_string());
    let strategy = match args.method.as_str() {
        "gree" => BettingStrategy::gree(),
        "grel" => BettingStrategy::grel(),
        "grem" => BettingStrategy::grem(),
        "taylor-gree" => BettingStrategy::taylor_gree(),
        "taylor-grel" => BettingStrategy::taylor_grel(),
        "taylor-grem" => BettingStrategy::taylor_grem(),
        "fixed" => {
            let lambda = args
                .lambda
                .ok_or_else(|| CliError::Config("--method fixed requires --lambda".to_string()))?;
            BettingStrategy::fixed(lambda).map_err(|e| cfg(&e))?
        }
        "gro" => {
            let spec = args.alternative.as_deref().ok_or_else(|| {
                CliError::Config(
                    "--method gro requires --alternative \"loss:weight,...\"".to_string(),
                )
            })?;
            let law = parse_alternative(spec)?;
            BettingStrategy::gro(Arc::new(move |_t: usize| law.clone()))
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown method `{other}`; use gro|gree|grel|grem|taylor-gree|taylor-grel|taylor-grem|fixed"
            )))
        }
    };
    let strategy = strategy
        .with_gamma(args.gamma)
        .map_err(|e| cfg(&e))?
        .with_window(args.window)
        .with_warmup(args.warmup);
    Ok(strategy)
}

fn parse_alternative(spec: &str) -> Result<Law, CliError> {
    let mut atoms = Vec::new();
    for part in spec.split(',') {
        let (v, w) = part.split_once(':').ok_or_else(|| {
            CliError::Config(format!("alternative atom `{part}` is not `loss:weight`"))
        })?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("alternative loss `{v}` is not a number")))?;
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("alternative weight `{w}` is not a number")))?;
        atoms.push((v, w));
    }
    let total: f64 = atoms.iter().map(|(_, w)| w).sum();
    if atoms.is_empty() || total <= 0.0 {
        return Err(CliError::Config("alternative law has no mass".to_string()));
    }
    for (_, w) in atoms.iter_mut() {
        *w /= total;
    }
    Ok(Law::Finite(atoms))
}

fn read_input(path: &PathBuf, measure: Measure) -> Result<InputData, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Schema(e.to_string()))?
        .clone();
    let find = |names: &[&str]| -> Option<usize> {
        headers
            .iter()
            .position(|h| names.contains(&h.trim().to_ascii_lowercase().as_str()))
    };
    let loss_col = find(&["loss"])
        .ok_or_else(|| CliError::Schema("missing required column `loss`".to_string()))?;
    let var_col = find(&["var_forecast", "var"])
        .ok_or_else(|| CliError::Schema("missing required column `var_forecast`".to_string()))?;
    let es_col = find(&["es_forecast", "es"]);
    if measure == Measure::Es && es_col.is_none() {
        return Err(CliError::Schema(
            "measure `es` requires an `es_forecast` column".to_string(),
        ));
    }

    let mut keys: Vec<String> = Vec::new();
    let mut records: Vec<BacktestRecord> = Vec::new();
    let mut integer_keys: Option<bool> = None;
    let mut last_int: i64 = i64::MIN;
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| CliError::Data(format!("row {}: {e}", i + 1)))?;
        let key = row.get(0).unwrap_or("").trim().to_string();
        let parsed_int = key.parse::<i64>().ok();
        match integer_keys {
            None => integer_keys = Some(parsed_int.is_some()),
            Some(expect) if expect != parsed_int.is_some() => {
                return Err(CliError::Data(format!(
                    "row {}: key `{key}` mixes date and integer indices",
                    i + 1
                )))
            }
            _ => {}
        }
        if let Some(k) = parsed_int {
            if k <= last_int {
                return Err(CliError::Data(format!(
                    "row {}: index `{key}` is not strictly increasing",
                    i + 1
                )));
            }
            last_int = k;
        } else if let Some(prev) = keys.last() {
            if key <= *prev {
                return Err(CliError::Data(format!(
                    "row {}: date `{key}` is not strictly increasing",
                    i + 1
                )));
            }
        }

        let parse_cell = |col: usize, name: &str| -> Result<f64, CliError> {
            let raw = row.get(col).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| {
                CliError::Data(format!("row {}: {name} `{raw}` is not a number", i + 1))
            })?;
            if v.is_nan() {
                return Err(CliError::Data(format!("row {}: {name} is NaN", i + 1)));
            }
            Ok(v)
        };
        let loss = parse_cell(loss_col, "loss")?;
        let var = parse_cell(var_col, "var_forecast")?;
        let record = match measure {
            Measure::Var => BacktestRecord::new(i + 1, loss, var, None),
            Measure::Es => {
                let es = parse_cell(es_col.unwrap(), "es_forecast")?;
                BacktestRecord::new(i + 1, loss, es, Some(var))
            }
        };
        keys.push(key);
        records.push(record);
    }
    if records.is_empty() {
        return Err(CliError::Data("input has no data rows".to_string()));
    }
    Ok(InputData { keys, records })
}
