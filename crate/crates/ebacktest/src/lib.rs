//! Model-free, anytime-valid backtesting of Value-at-Risk and Expected
//! Shortfall via e-processes.
//!
//! The pipeline: each day a financial institution reports risk forecasts
//! `(r_t, z_t)` and a loss `L_t` realizes. A backtest e-statistic maps the
//! triple to a nonnegative e-value whose conditional mean is at most 1 as
//! long as the reports are not underestimates. A predictable betting process
//! stakes a fraction `lambda_t` of the accumulated wealth on each e-value,
//! producing a test supermartingale; by Ville's inequality the wealth path
//! may be monitored continuously and compared against thresholds at any
//! stopping time without inflating the type-I error. Sustained
//! underestimation makes the wealth grow exponentially, so crossings are
//! detections of imprudent risk reporting.
//!
//! Module map:
//!
//! * [`distributions`] — standardized normal / Student-t / skewed-t
//!   innovations: density, CDF, quantile, Expected Shortfall, seeded
//!   sampling.
//! * [`estatistics`] — backtest e-statistics for the mean, expected loss,
//!   variance, quantile (VaR), and the (ES, VaR) pair, with their
//!   characterization mixture forms.
//! * [`betting`] — the GRO/GREE/GREL/GREM and Taylor stake rules with cap
//!   and rolling-window support.
//! * [`eprocess`] — log-space wealth accumulation, running supremum,
//!   anytime-valid threshold detections.
//! * [`timeseries`] — AR-GARCH simulation, QML and innovation fitting,
//!   forecast streams including deliberate mis-reporting.
//! * [`harness`] — the day loop and seeded Monte-Carlo experiment drivers
//!   with CSV/JSON reporting.

pub mod betting;
pub mod distributions;
pub mod eprocess;
pub mod estatistics;
pub mod harness;
pub mod numeric;
pub mod timeseries;

pub use betting::{BettingState, BettingStrategy, StrategyKind};
pub use distributions::InnovationSpec;
pub use eprocess::{DetectionReport, DetectionThresholds, EProcessState};
pub use estatistics::{BacktestRecord, EStatistic};
pub use harness::{run_backtest, run_experiment, BacktestRun, Measure};
pub use timeseries::{Adjustment, Dgp, Forecaster, ScenarioConfig};
