//! Predefined experiment suites, desk-scaled by default.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use ebacktest::harness::report::{write_structural_csv, AggregateTable};
use ebacktest::harness::{
    example51, gaming_experiment, run_adjustment_rows, run_experiment, ExperimentSpec,
    GrowthScenario, Measure,
};
use ebacktest::{
    Adjustment, BettingStrategy, Dgp, DetectionThresholds, Forecaster, ScenarioConfig,
};

use crate::CliError;

pub const SUITES: &[&str] = &[
    "stationary-var",
    "stationary-es",
    "structural",
    "gaming",
    "type1",
    "example51",
];

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub reps: Option<usize>,
    pub seed: u64,
    pub jobs: usize,
    pub refit: Option<usize>,
    pub out_dir: PathBuf,
    pub full: bool,
}

impl SuiteOptions {
    fn reps(&self, desk: usize, full: usize) -> usize {
        self.reps.unwrap_or(if self.full { full } else { desk })
    }

    fn refit(&self) -> usize {
        self.refit.unwrap_or(if self.full { 1 } else { 10 })
    }
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Other(e.to_string()))?;
    f.write_all(b"\n")?;
    Ok(())
}

fn write_table(out_dir: &Path, stem: &str, table: &AggregateTable) -> Result<Vec<PathBuf>, CliError> {
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let json_path = out_dir.join(format!("{stem}.json"));
    table
        .write_csv(File::create(&csv_path)?)
        .map_err(|e| CliError::Other(e.to_string()))?;
    write_json(&json_path, &table.to_json())?;
    Ok(vec![csv_path, json_path])
}

pub fn run_suite(name: &str, opts: &SuiteOptions) -> Result<Vec<PathBuf>, CliError> {
    match name {
        "stationary-var" => stationary(Measure::Var, 0.99, opts, "stationary-var"),
        "stationary-es" => stationary(Measure::Es, 0.975, opts, "stationary-es"),
        "structural" => structural(opts),
        "gaming" => gaming(opts),
        "type1" => type1(opts),
        "example51" => example51_suite(opts),
        other => Err(CliError::Config(format!(
            "unknown suite `{other}`; available suites: {}",
            SUITES.join(", ")
        ))),
    }
}

const FORECASTERS: &[(Forecaster, &str)] = &[
    (Forecaster::FitNormal, "normal"),
    (Forecaster::FitT, "t"),
    (Forecaster::FitSkewedT, "skewed-t"),
    (Forecaster::TrueModel, "true"),
];

fn stationary(
    measure: Measure,
    level: f64,
    opts: &SuiteOptions,
    stem: &str,
) -> Result<Vec<PathBuf>, CliError> {
    let reps = opts.reps(200, 1000);
    let rows: Vec<(&str, Adjustment)> = match measure {
        Measure::Var => vec![
            ("-10%", Adjustment::MinusTenPctVar),
            ("exact", Adjustment::Exact),
            ("+10%", Adjustment::PlusTenPctVar),
        ],
        Measure::Es => vec![
            ("-10% ES", Adjustment::MinusTenPctEs),
            ("-10% both", Adjustment::MinusTenPctBoth),
            ("exact", Adjustment::Exact),
            ("+10% both", Adjustment::PlusTenPctBoth),
            ("+10% ES", Adjustment::PlusTenPctEs),
        ],
    };
    let thresholds = DetectionThresholds::standard();
    let strategy = BettingStrategy::taylor_grem();
    let mut tables = Vec::new();
    for (forecaster, fc_label) in FORECASTERS {
        let scenario = ScenarioConfig::new(Dgp::stationary(), *forecaster, level)
            .with_fit(500, opts.refit());
        let labeled: Vec<(String, Adjustment)> = rows
            .iter()
            .map(|(adj_label, adj)| (format!("{fc_label}/{adj_label}"), *adj))
            .collect();
        let table = run_adjustment_rows(
            &scenario,
            &labeled,
            measure,
            &strategy,
            &thresholds,
            reps,
            opts.seed,
            opts.jobs,
        )
        .map_err(internal)?;
        tables.push(table);
    }
    write_table(&opts.out_dir, stem, &AggregateTable::merged(tables))
}

fn structural(opts: &SuiteOptions) -> Result<Vec<PathBuf>, CliError> {
    let reps = opts.reps(200, 1000);
    let change_days: Vec<usize> = if opts.full {
        (0..=250).step_by(25).collect()
    } else {
        vec![0, 100, 200, 250]
    };
    let strategy = BettingStrategy::grem();
    let mut files = Vec::new();
    let mut combined = serde_json::Map::new();
    for (measure, tag) in [(Measure::Var, "var"), (Measure::Es, "es")] {
        let cells = ebacktest::harness::structural_experiment(
            &change_days,
            reps,
            20.0,
            measure,
            &strategy,
            0.95,
            opts.seed,
            opts.jobs,
        )
        .map_err(internal)?;
        let path = opts.out_dir.join(format!("structural-{tag}.csv"));
        write_structural_csv(&cells, File::create(&path)?)
            .map_err(|e| CliError::Other(e.to_string()))?;
        files.push(path);
        combined.insert(
            tag.to_string(),
            serde_json::to_value(&cells).map_err(|e| CliError::Other(e.to_string()))?,
        );
    }
    let json_path = opts.out_dir.join("structural.json");
    write_json(&json_path, &serde_json::Value::Object(combined))?;
    files.push(json_path);
    Ok(files)
}

fn gaming(opts: &SuiteOptions) -> Result<Vec<PathBuf>, CliError> {
    let reps = opts.reps(200, 1000);
    let thresholds = DetectionThresholds::standard();
    let strategy = BettingStrategy::taylor_grem().with_window(Some(500));
    let mut rows = Vec::new();
    let mut extras = serde_json::Map::new();
    for (measure, level, tag) in [(Measure::Var, 0.99, "var99"), (Measure::Es, 0.975, "es975")] {
        let scenario = ScenarioConfig::new(Dgp::stationary(), Forecaster::FitSkewedT, level)
            .with_spans(500, 2000)
            .with_fit(500, opts.refit())
            .with_adjustment(Adjustment::Gamed { switch_day: 1000 });
        let report = gaming_experiment(
            &scenario, measure, &strategy, &thresholds, reps, opts.seed, opts.jobs,
        )
        .map_err(internal)?;
        let mut row = report.row.clone();
        row.label = tag.to_string();
        rows.push(row);
        extras.insert(
            tag.to_string(),
            serde_json::json!({
                "mean_days_after_switch": report.mean_days_after_switch,
                "gree_leg_mean_abs_log": report.gree_leg_mean_abs_log,
            }),
        );
    }
    let table = AggregateTable::new(rows);
    let mut files = write_table(&opts.out_dir, "gaming", &table)?;
    let mut json = table.to_json();
    json["switch_day"] = serde_json::json!(1000);
    json["phases"] = serde_json::Value::Object(extras);
    let json_path = opts.out_dir.join("gaming.json");
    write_json(&json_path, &json)?;
    files.push(json_path);
    Ok(files)
}

fn type1(opts: &SuiteOptions) -> Result<Vec<PathBuf>, CliError> {
    let reps = opts.reps(200, 1000);
    let sizes: &[usize] = if opts.full {
        &[500, 1000, 10_000]
    } else {
        &[500, 1000]
    };
    let methods: Vec<(&str, BettingStrategy)> = vec![
        ("lambda=0.01", BettingStrategy::fixed(0.01).map_err(internal)?),
        ("gree", BettingStrategy::taylor_gree()),
        ("grel", BettingStrategy::taylor_grel()),
        ("grem", BettingStrategy::taylor_grem()),
    ];
    let mut tables = Vec::new();
    for size in sizes {
        for (label, strategy) in &methods {
            let spec = ExperimentSpec {
                label: format!("{label}/n={size}"),
                scenario: ScenarioConfig::new(Dgp::stationary(), Forecaster::TrueModel, 0.99)
                    .with_spans(0, *size),
                measure: Measure::Var,
                strategy: strategy.clone(),
                thresholds: DetectionThresholds::standard(),
            };
            tables.push(run_experiment(&spec, reps, opts.seed, opts.jobs).map_err(internal)?);
        }
    }
    write_table(&opts.out_dir, "type1", &AggregateTable::merged(tables))
}

fn example51_suite(opts: &SuiteOptions) -> Result<Vec<PathBuf>, CliError> {
    let reps = opts.reps(200, 1000);
    let mut files = Vec::new();
    let mut summary = serde_json::Map::new();
    for (scenario, tag) in [
        (GrowthScenario::LinearTrend, "a"),
        (GrowthScenario::SineTrend, "b"),
        (GrowthScenario::NoisyForecasts, "c"),
    ] {
        let out = example51(scenario, reps, opts.seed, opts.jobs).map_err(internal)?;
        let path = opts.out_dir.join(format!("example51-{tag}.csv"));
        let mut w = csv::Writer::from_writer(File::create(&path)?);
        w.write_record(["t", "gro", "gree", "grel", "grem"])
            .map_err(|e| CliError::Other(e.to_string()))?;
        for (t, values) in &out.mean_log_path {
            w.write_record([
                t.to_string(),
                format!("{:.8}", values[0]),
                format!("{:.8}", values[1]),
                format!("{:.8}", values[2]),
                format!("{:.8}", values[3]),
            ])
            .map_err(|e| CliError::Other(e.to_string()))?;
        }
        w.flush()?;
        files.push(path);
        summary.insert(
            tag.to_string(),
            serde_json::json!({
                "mean_final_log": {
                    "gro": out.mean_final(&out.gro_final),
                    "gree": out.mean_final(&out.gree_final),
                    "grel": out.mean_final(&out.grel_final),
                    "grem": out.mean_final(&out.grem_final),
                },
                "reps": reps,
            }),
        );
    }
    let json_path = opts.out_dir.join("example51.json");
    write_json(&json_path, &serde_json::Value::Object(summary))?;
    files.push(json_path);
    Ok(files)
}
