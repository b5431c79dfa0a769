//! Backtest orchestration: a day loop wiring records, e-statistic, betting
//! strategy, and e-process together, plus seeded Monte-Carlo experiment
//! drivers that aggregate detection tables across replications.
//!
//! Replication `r` of an experiment always uses `base_seed + r`, and results
//! are reduced in replication order, so a table is bit-identical for any
//! worker count.

mod example51;
pub mod report;

pub use example51::{example51, Example51Outcome, GrowthScenario};
pub use report::{AggregateCell, AggregateRow, AggregateTable};

use rayon::prelude::*;
use thiserror::Error;

use crate::betting::{BettingError, BettingState, BettingStrategy};
use crate::eprocess::{DetectionReport, DetectionThresholds, EProcessError, EProcessState};
use crate::estatistics::{BacktestRecord, EStatError, EStatistic};
use crate::numeric::logaddexp;
use crate::timeseries::{generate_stream, Adjustment, ScenarioConfig, ScenarioStream, TimeSeriesError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("records must be strictly ordered by t with no gaps (violation at index {0})")]
    UnorderedRecords(usize),
    #[error(transparent)]
    EStat(#[from] EStatError),
    #[error(transparent)]
    Betting(#[from] BettingError),
    #[error(transparent)]
    EProcess(#[from] EProcessError),
    #[error(transparent)]
    TimeSeries(#[from] TimeSeriesError),
}

/// Which risk measure the records backtest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Var,
    Es,
}

impl Measure {
    pub fn estatistic(&self, level: f64) -> Result<EStatistic, EStatError> {
        match self {
            Measure::Var => EStatistic::quantile(level),
            Measure::Es => EStatistic::es_pair(level),
        }
    }

    pub fn records(&self, stream: &ScenarioStream) -> Vec<BacktestRecord> {
        match self {
            Measure::Var => stream.var_records(),
            Measure::Es => stream.es_records(),
        }
    }
}

/// One full backtest: a record stream, the e-statistic to apply, the betting
/// strategy, and the detection thresholds.
#[derive(Debug, Clone)]
pub struct BacktestRun {
    pub records: Vec<BacktestRecord>,
    pub estat: EStatistic,
    pub strategy: BettingStrategy,
    pub thresholds: DetectionThresholds,
}

/// Per-day trajectory row.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub lambda: f64,
    pub e_value: f64,
    pub log_wealth: f64,
    pub sup_log_wealth: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn final_log_wealth(&self) -> f64 {
        self.points.last().map(|p| p.log_wealth).unwrap_or(0.0)
    }
}

/// Output of one backtest run. Mixture strategies also report their two leg
/// wealth paths.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub report: DetectionReport,
    pub gree_leg_log: Option<Vec<f64>>,
    pub grel_leg_log: Option<Vec<f64>>,
}

/// Runs the day loop: compute the predictable stake, evaluate the day's
/// e-value, update the wealth (both legs plus their average for mixtures),
/// and track threshold crossings.
pub fn run_backtest(run: &BacktestRun) -> Result<RunResult, HarnessError> {
    for (i, pair) in run.records.windows(2).enumerate() {
        if pair[1].t != pair[0].t + 1 {
            return Err(HarnessError::UnorderedRecords(i + 1));
        }
    }
    let mixture = run.strategy.is_mixture();
    let mut state = BettingState::new();
    let mut process = EProcessState::new(run.thresholds.clone());
    let mut points = Vec::with_capacity(run.records.len());
    let mut gree_leg = mixture.then(|| Vec::with_capacity(run.records.len()));
    let mut grel_leg = mixture.then(|| Vec::with_capacity(run.records.len()));

    for (i, rec) in run.records.iter().enumerate() {
        let decision = run.strategy.decide(&state, i + 1, &run.estat, rec.r, rec.z)?;
        let e_value = run.estat.evaluate_record(rec)?;
        state.record(rec.loss, e_value, &decision);
        if mixture {
            // The mixture wealth is defined as the average of the two leg
            // wealths; computing it this way keeps the identity exact.
            let log_mix =
                logaddexp(state.gree_log_wealth, state.grel_log_wealth) - std::f64::consts::LN_2;
            process.advance_to(log_mix);
            gree_leg.as_mut().unwrap().push(state.gree_log_wealth);
            grel_leg.as_mut().unwrap().push(state.grel_log_wealth);
        } else {
            process.update(e_value, decision.lambda)?;
        }
        points.push(TrajectoryPoint {
            t: rec.t,
            lambda: decision.lambda,
            e_value,
            log_wealth: process.log_wealth(),
            sup_log_wealth: process.running_sup_log(),
        });
        if process.is_stopped() {
            break;
        }
    }

    Ok(RunResult {
        trajectory: Trajectory { points },
        report: process.detect(),
        gree_leg_log: gree_leg,
        grel_leg_log: grel_leg,
    })
}

/// One experiment cell: scenario, measure, strategy, thresholds, and a label
/// for the output table.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub label: String,
    pub scenario: ScenarioConfig,
    pub measure: Measure,
    pub strategy: BettingStrategy,
    pub thresholds: DetectionThresholds,
}

#[derive(Debug, Clone)]
struct RepOutcome {
    crossing_days: Vec<Option<usize>>,
    final_log: f64,
    failed: bool,
}

impl RepOutcome {
    fn failure(n_thresholds: usize) -> Self {
        RepOutcome {
            crossing_days: vec![None; n_thresholds],
            final_log: f64::NAN,
            failed: true,
        }
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("worker pool")
            .install(f)
    }
}

fn outcome_of_run(result: &RunResult) -> RepOutcome {
    RepOutcome {
        crossing_days: result
            .report
            .crossings
            .iter()
            .map(|c| c.map(|x| x.day))
            .collect(),
        final_log: result.trajectory.final_log_wealth(),
        failed: false,
    }
}

/// Runs several reporting adjustments of the same scenario, sharing each
/// replication's fitted forecast stream across the multiplicative rows.
pub fn run_adjustment_rows(
    base: &ScenarioConfig,
    rows: &[(String, Adjustment)],
    measure: Measure,
    strategy: &BettingStrategy,
    thresholds: &DetectionThresholds,
    n_reps: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<AggregateTable, HarnessError> {
    base.validate()?;
    let n_thresholds = thresholds.levels().len();
    let estat = measure.estatistic(base.level)?;
    let needs_exact = rows
        .iter()
        .any(|(_, adj)| !matches!(adj, Adjustment::Gamed { .. }));

    let per_rep: Vec<Vec<RepOutcome>> = with_pool(jobs, || {
        (0..n_reps)
            .into_par_iter()
            .map(|rep| {
                let seed = base_seed + rep as u64;
                let mut exact_cfg = base.clone();
                exact_cfg.adjustment = Adjustment::Exact;
                let exact = if needs_exact {
                    Some(generate_stream(&exact_cfg, seed))
                } else {
                    None
                };
                rows.iter()
                    .map(|(_, adj)| {
                        let stream = match adj {
                            Adjustment::Gamed { .. } => {
                                let mut cfg = base.clone();
                                cfg.adjustment = *adj;
                                generate_stream(&cfg, seed)
                            }
                            _ => match exact.as_ref().expect("exact stream generated") {
                                Ok(s) => s.with_adjustment(*adj).map_err(Into::into),
                                Err(e) => Err(e.clone()),
                            },
                        };
                        let stream = match stream {
                            Ok(s) => s,
                            Err(_) => return RepOutcome::failure(n_thresholds),
                        };
                        let run = BacktestRun {
                            records: measure.records(&stream),
                            estat,
                            strategy: strategy.clone(),
                            thresholds: thresholds.clone(),
                        };
                        match run_backtest(&run) {
                            Ok(result) => outcome_of_run(&result),
                            Err(_) => RepOutcome::failure(n_thresholds),
                        }
                    })
                    .collect()
            })
            .collect()
    });

    let mut table_rows = Vec::with_capacity(rows.len());
    for (row_idx, (label, _)) in rows.iter().enumerate() {
        let outcomes: Vec<&RepOutcome> = per_rep.iter().map(|r| &r[row_idx]).collect();
        table_rows.push(aggregate_row(label, &outcomes, thresholds.levels()));
    }
    Ok(AggregateTable::new(table_rows))
}

fn aggregate_row(label: &str, outcomes: &[&RepOutcome], levels: &[f64]) -> AggregateRow {
    let ok: Vec<&&RepOutcome> = outcomes.iter().filter(|o| !o.failed).collect();
    let n = ok.len();
    let mut cells = Vec::with_capacity(levels.len());
    for (i, level) in levels.iter().enumerate() {
        let detecting: Vec<usize> = ok
            .iter()
            .filter_map(|o| o.crossing_days[i])
            .collect();
        let detection_pct = if n == 0 {
            0.0
        } else {
            100.0 * detecting.len() as f64 / n as f64
        };
        // Conditional on detection: the averaging set shrinks with the
        // threshold, so day counts need not be monotone across thresholds.
        let mean_days = if detecting.is_empty() {
            None
        } else {
            Some(detecting.iter().sum::<usize>() as f64 / detecting.len() as f64)
        };
        cells.push(AggregateCell {
            threshold: *level,
            detection_pct,
            mean_days_to_detect: mean_days,
        });
    }
    debug_assert!(cells
        .windows(2)
        .all(|w| w[0].detection_pct >= w[1].detection_pct));
    let mean_final_log = if n == 0 {
        f64::NAN
    } else {
        ok.iter().map(|o| o.final_log).sum::<f64>() / n as f64
    };
    AggregateRow {
        label: label.to_string(),
        cells,
        mean_final_log_e: mean_final_log,
        n_reps: n,
        failures: outcomes.len() - n,
    }
}

/// Runs one experiment cell over `n_reps` seeded replications.
pub fn run_experiment(
    spec: &ExperimentSpec,
    n_reps: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<AggregateTable, HarnessError> {
    run_adjustment_rows(
        &spec.scenario,
        &[(spec.label.clone(), spec.scenario.adjustment)],
        spec.measure,
        &spec.strategy,
        &spec.thresholds,
        n_reps,
        base_seed,
        jobs,
    )
}

/// One structural-change grid cell.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StructuralCell {
    pub change_day: usize,
    pub detection_pct: f64,
    /// Mean days from the change to detection, conditional on detecting
    /// after the change.
    pub arl: Option<f64>,
    pub n_reps: usize,
    pub failures: usize,
}

/// Detection percentage and average run length over a grid of change days,
/// at a single rejection threshold (e.g. 20 for the 5% level).
#[allow(clippy::too_many_arguments)]
pub fn structural_experiment(
    change_days: &[usize],
    n_reps: usize,
    threshold: f64,
    measure: Measure,
    strategy: &BettingStrategy,
    level: f64,
    base_seed: u64,
    jobs: usize,
) -> Result<Vec<StructuralCell>, HarnessError> {
    let thresholds = DetectionThresholds::new(vec![threshold])?;
    let mut cells = Vec::with_capacity(change_days.len());
    for bstar in change_days {
        let scenario = ScenarioConfig::new(
            crate::timeseries::Dgp::structural(*bstar),
            crate::timeseries::Forecaster::FilteredEmpirical,
            level,
        )
        .with_spans(250, 250);
        let estat = measure.estatistic(level)?;
        let outcomes: Vec<RepOutcome> = with_pool(jobs, || {
            (0..n_reps)
                .into_par_iter()
                .map(|rep| {
                    let seed = base_seed + rep as u64;
                    let stream = match generate_stream(&scenario, seed) {
                        Ok(s) => s,
                        Err(_) => return RepOutcome::failure(1),
                    };
                    let run = BacktestRun {
                        records: measure.records(&stream),
                        estat,
                        strategy: strategy.clone(),
                        thresholds: thresholds.clone(),
                    };
                    match run_backtest(&run) {
                        Ok(result) => outcome_of_run(&result),
                        Err(_) => RepOutcome::failure(1),
                    }
                })
                .collect()
        });
        let ok: Vec<&RepOutcome> = outcomes.iter().filter(|o| !o.failed).collect();
        let detections = ok.iter().filter(|o| o.crossing_days[0].is_some()).count();
        let post_change: Vec<f64> = ok
            .iter()
            .filter_map(|o| o.crossing_days[0])
            .filter(|day| *day > *bstar)
            .map(|day| (day - bstar) as f64)
            .collect();
        cells.push(StructuralCell {
            change_day: *bstar,
            detection_pct: if ok.is_empty() {
                0.0
            } else {
                100.0 * detections as f64 / ok.len() as f64
            },
            arl: if post_change.is_empty() {
                None
            } else {
                Some(post_change.iter().sum::<f64>() / post_change.len() as f64)
            },
            n_reps: ok.len(),
            failures: outcomes.len() - ok.len(),
        });
    }
    Ok(cells)
}

/// Gaming-scenario results: the usual detection row plus days counted from
/// the reporting switch and the behaviour of the GREE leg during the
/// over-reporting phase.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GamingReport {
    pub row: AggregateRow,
    /// Per threshold: mean days from the switch day to detection,
    /// conditional on detecting after the switch.
    pub mean_days_after_switch: Vec<Option<f64>>,
    /// Mean over replications of the average |log M_t| of the GREE leg over
    /// the over-reporting phase.
    pub gree_leg_mean_abs_log: f64,
}

/// Runs the deliberate over-forecast scenario and reports detections
/// relative to the switch day.
pub fn gaming_experiment(
    scenario: &ScenarioConfig,
    measure: Measure,
    strategy: &BettingStrategy,
    thresholds: &DetectionThresholds,
    n_reps: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<GamingReport, HarnessError> {
    scenario.validate()?;
    let switch_day = match scenario.adjustment {
        Adjustment::Gamed { switch_day } => switch_day,
        _ => {
            return Err(HarnessError::TimeSeries(TimeSeriesError::InvalidConfig(
                "adjustment: gaming_experiment requires a gamed scenario".into(),
            )))
        }
    };
    if !strategy.is_mixture() {
        return Err(HarnessError::Betting(BettingError::NonIntegrable));
    }
    let estat = measure.estatistic(scenario.level)?;
    let n_thresholds = thresholds.levels().len();

    struct GamingRep {
        outcome: RepOutcome,
        gree_abs_log: f64,
    }

    let reps: Vec<GamingRep> = with_pool(jobs, || {
        (0..n_reps)
            .into_par_iter()
            .map(|rep| {
                let seed = base_seed + rep as u64;
                let failed = GamingRep {
                    outcome: RepOutcome::failure(n_thresholds),
                    gree_abs_log: f64::NAN,
                };
                let stream = match generate_stream(scenario, seed) {
                    Ok(s) => s,
                    Err(_) => return failed,
                };
                let run = BacktestRun {
                    records: measure.records(&stream),
                    estat,
                    strategy: strategy.clone(),
                    thresholds: thresholds.clone(),
                };
                match run_backtest(&run) {
                    Ok(result) => {
                        let leg = result.gree_leg_log.as_ref().expect("mixture run");
                        let phase = &leg[..switch_day.min(leg.len())];
                        let abs_log = if phase.is_empty() {
                            0.0
                        } else {
                            phase.iter().map(|x| x.abs()).sum::<f64>() / phase.len() as f64
                        };
                        GamingRep {
                            outcome: outcome_of_run(&result),
                            gree_abs_log: abs_log,
                        }
                    }
                    Err(_) => failed,
                }
            })
            .collect()
    });

    let outcomes: Vec<&RepOutcome> = reps.iter().map(|r| &r.outcome).collect();
    let row = aggregate_row("gamed", &outcomes, thresholds.levels());
    let ok: Vec<&GamingRep> = reps.iter().filter(|r| !r.outcome.failed).collect();
    let mut mean_days_after_switch = Vec::with_capacity(n_thresholds);
    for i in 0..n_thresholds {
        let days: Vec<f64> = ok
            .iter()
            .filter_map(|r| r.outcome.crossing_days[i])
            .filter(|d| *d > switch_day)
            .map(|d| (d - switch_day) as f64)
            .collect();
        mean_days_after_switch.push(if days.is_empty() {
            None
        } else {
            Some(days.iter().sum::<f64>() / days.len() as f64)
        });
    }
    let gree_leg_mean_abs_log = if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().map(|r| r.gree_abs_log).sum::<f64>() / ok.len() as f64
    };
    Ok(GamingReport {
        row,
        mean_days_after_switch,
        gree_leg_mean_abs_log,
    })
}
