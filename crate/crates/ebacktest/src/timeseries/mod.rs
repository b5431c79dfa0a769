//! Loss-series simulation and risk forecasting.
//!
//! The module covers three pipelines: simulating AR(1)-GARCH(1,1) losses
//! (optionally with a structural break in the persistence parameter), fitting
//! forecast models on rolling windows (Gaussian QML for the dynamics plus
//! maximum likelihood for the innovation family), and turning fitted state
//! into daily VaR/ES forecast streams, including deliberately mis-reported
//! variants.

mod fit;
mod forecast;

pub use fit::{fit_ar_garch_qml, fit_garch_qml_zero_mean, fit_innovations, FitError, InnovationFamily};
pub use forecast::{
    empirical_forecast, forecast_risk, generate_stream, ScenarioStream,
};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::distributions::{DistError, InnovationSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeSeriesError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("window of {len} losses too short, need at least {need}")]
    WindowTooShort { len: usize, need: usize },
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// AR(1)-GARCH(1,1) parameters:
/// `mu_t = c + psi L_{t-1}`, `sigma^2_t = alpha0 + alpha1 eps_{t-1}^2 + beta sigma^2_{t-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArGarchParams {
    pub c: f64,
    pub psi: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta: f64,
}

impl ArGarchParams {
    pub fn new(c: f64, psi: f64, alpha0: f64, alpha1: f64, beta: f64) -> Self {
        ArGarchParams {
            c,
            psi,
            alpha0,
            alpha1,
            beta,
        }
    }

    /// Covariance stationarity of the variance recursion.
    pub fn is_stationary(&self) -> bool {
        self.alpha1 + self.beta < 1.0 && self.alpha0 > 0.0
    }

    /// Unconditional innovation variance `alpha0 / (1 - alpha1 - beta)`,
    /// clamped when the recursion is explosive.
    pub fn unconditional_variance(&self) -> f64 {
        let persistence = (self.alpha1 + self.beta).min(0.999);
        self.alpha0 / (1.0 - persistence)
    }

    /// Unconditional mean `c / (1 - psi)` of the AR recursion.
    pub fn unconditional_mean(&self) -> f64 {
        if self.psi.abs() < 1.0 {
            self.c / (1.0 - self.psi)
        } else {
            self.c
        }
    }
}

/// Data-generating process for simulated losses.
#[derive(Debug, Clone, PartialEq)]
pub enum Dgp {
    /// Stationary AR(1)-GARCH(1,1): `L_t = mu_t + sigma_t Z_t`.
    ArGarch {
        params: ArGarchParams,
        innovation: InnovationSpec,
    },
    /// Zero-mean GARCH(1,1) on negated innovations, `L_t = -sigma_t Z_t`,
    /// whose persistence jumps from `beta_pre` to `beta_post` after test day
    /// `change_day`.
    StructuralGarch {
        omega: f64,
        alpha: f64,
        beta_pre: f64,
        beta_post: f64,
        change_day: usize,
        innovation: InnovationSpec,
    },
}

impl Dgp {
    /// The stationary benchmark process: `mu_t = -0.05 + 0.3 L_{t-1}`,
    /// `sigma^2_t = 0.01 + 0.1 sigma^2_{t-1} Z^2_{t-1} + 0.85 sigma^2_{t-1}`
    /// with skewed-t(5, 1.5) innovations.
    pub fn stationary() -> Dgp {
        Dgp::ArGarch {
            params: ArGarchParams::new(-0.05, 0.3, 0.01, 0.1, 0.85),
            innovation: InnovationSpec::skewed_t(5.0, 1.5).expect("valid preset"),
        }
    }

    /// The structural-change benchmark: `sigma^2_t = 1e-5 + 0.04 L^2_{t-1}
    /// + beta_t sigma^2_{t-1}` with `beta_t` stepping from 0.7 to 0.95 after
    /// test day `change_day`, skewed-t(5, 0.95) innovations, negated losses.
    pub fn structural(change_day: usize) -> Dgp {
        Dgp::StructuralGarch {
            omega: 1e-5,
            alpha: 0.04,
            beta_pre: 0.7,
            beta_post: 0.95,
            change_day,
            innovation: InnovationSpec::skewed_t(5.0, 0.95).expect("valid preset"),
        }
    }

    pub fn custom(params: ArGarchParams, innovation: InnovationSpec) -> Dgp {
        Dgp::ArGarch { params, innovation }
    }

    pub fn innovation(&self) -> &InnovationSpec {
        match self {
            Dgp::ArGarch { innovation, .. } => innovation,
            Dgp::StructuralGarch { innovation, .. } => innovation,
        }
    }
}

/// Which forecaster produces the daily (VaR, ES) reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forecaster {
    /// Rolling QML refits assuming normal innovations.
    FitNormal,
    /// Rolling QML refits plus Student-t ML on standardized residuals.
    FitT,
    /// Rolling QML refits plus skewed-t ML on standardized residuals.
    FitSkewedT,
    /// Oracle: the true conditional mean/volatility and the true innovation
    /// law.
    TrueModel,
    /// Non-parametric rolling-window empirical VaR/ES of raw losses.
    Empirical,
    /// Structural-change procedure: one QML fit on the presample, then
    /// empirical VaR/ES of presample residuals scaled by filtered volatility.
    FilteredEmpirical,
}

/// How the reported forecasts deviate from the point forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjustment {
    Exact,
    MinusTenPctEs,
    MinusTenPctBoth,
    PlusTenPctEs,
    PlusTenPctBoth,
    MinusTenPctVar,
    PlusTenPctVar,
    /// Over-report (+10% both, skewed-t fits) through `switch_day`, then
    /// switch to exact normal-fit forecasts.
    Gamed { switch_day: usize },
}

/// A full experiment cell: process, spans, forecaster, reporting adjustment,
/// and the probability level of the reported risk measures.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub dgp: Dgp,
    pub burn_in: usize,
    pub n_presample: usize,
    pub n_test: usize,
    pub forecaster: Forecaster,
    pub fit_window: usize,
    pub refit_interval: usize,
    pub adjustment: Adjustment,
    pub level: f64,
}

impl ScenarioConfig {
    pub fn new(dgp: Dgp, forecaster: Forecaster, level: f64) -> Self {
        ScenarioConfig {
            dgp,
            burn_in: 1000,
            n_presample: 500,
            n_test: 500,
            forecaster,
            fit_window: 500,
            refit_interval: 1,
            adjustment: Adjustment::Exact,
            level,
        }
    }

    pub fn with_spans(mut self, n_presample: usize, n_test: usize) -> Self {
        self.n_presample = n_presample;
        self.n_test = n_test;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_fit(mut self, fit_window: usize, refit_interval: usize) -> Self {
        self.fit_window = fit_window;
        self.refit_interval = refit_interval;
        self
    }

    pub fn with_adjustment(mut self, adjustment: Adjustment) -> Self {
        self.adjustment = adjustment;
        self
    }

    pub fn validate(&self) -> Result<(), TimeSeriesError> {
        let err = |msg: String| Err(TimeSeriesError::InvalidConfig(msg));
        if !(self.level > 0.0 && self.level < 1.0) {
            return err(format!("level: must lie in (0, 1), got {}", self.level));
        }
        if self.refit_interval == 0 {
            return err("refit_interval: must be at least 1".into());
        }
        if self.n_test == 0 {
            return err("n_test: must be positive".into());
        }
        let needs_window = matches!(
            self.forecaster,
            Forecaster::FitNormal
                | Forecaster::FitT
                | Forecaster::FitSkewedT
                | Forecaster::Empirical
        );
        if needs_window && self.fit_window > self.n_presample {
            return err(format!(
                "fit_window: {} exceeds n_presample {}",
                self.fit_window, self.n_presample
            ));
        }
        if let Adjustment::Gamed { switch_day } = self.adjustment {
            if switch_day == 0 || switch_day >= self.n_test {
                return err(format!(
                    "switch_day: {} outside the test span 1..{}",
                    switch_day, self.n_test
                ));
            }
            if !matches!(
                self.forecaster,
                Forecaster::FitNormal | Forecaster::FitT | Forecaster::FitSkewedT
            ) {
                return err(
                    "adjustment: gamed reporting requires a fitted forecaster".into(),
                );
            }
        }
        match (&self.forecaster, &self.dgp) {
            (Forecaster::TrueModel, Dgp::StructuralGarch { .. }) => {
                err("forecaster: true_model requires a stationary dgp".into())
            }
            (Forecaster::FilteredEmpirical, Dgp::ArGarch { .. }) => {
                err("forecaster: filtered_empirical requires a structural dgp".into())
            }
            _ => Ok(()),
        }
    }
}

/// Simulated losses for the presample plus test span, with the true
/// conditional mean and volatility retained for oracle forecasts.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    pub losses: Vec<f64>,
    pub true_mu: Vec<f64>,
    pub true_sigma: Vec<f64>,
}

/// Simulates the configured process. The burn-in is discarded; the returned
/// path covers `n_presample + n_test` days and is deterministic in `seed`.
pub fn simulate(config: &ScenarioConfig, seed: u64) -> Result<SimulatedPath, TimeSeriesError> {
    config.validate()?;
    let total = config.burn_in + config.n_presample + config.n_test;
    let keep = config.n_presample + config.n_test;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut losses = Vec::with_capacity(keep);
    let mut true_mu = Vec::with_capacity(keep);
    let mut true_sigma = Vec::with_capacity(keep);

    match &config.dgp {
        Dgp::ArGarch { params, innovation } => {
            if !params.is_stationary() {
                log::warn!(
                    "simulating non-stationary GARCH (alpha1 + beta = {})",
                    params.alpha1 + params.beta
                );
            }
            let dist = innovation.standardized()?;
            let mut sigma2 = params.unconditional_variance();
            let mut prev_loss = params.unconditional_mean();
            for i in 0..total {
                let mu = params.c + params.psi * prev_loss;
                let z = dist.draw(&mut rng);
                let sigma = sigma2.sqrt();
                let loss = mu + sigma * z;
                if i >= config.burn_in {
                    losses.push(loss);
                    true_mu.push(mu);
                    true_sigma.push(sigma);
                }
                let eps = loss - mu;
                sigma2 = params.alpha0 + params.alpha1 * eps * eps + params.beta * sigma2;
                prev_loss = loss;
            }
        }
        Dgp::StructuralGarch {
            omega,
            alpha,
            beta_pre,
            beta_post,
            change_day,
            innovation,
        } => {
            let dist = innovation.standardized()?;
            let test_start = config.burn_in + config.n_presample;
            let mut sigma2 = omega / (1.0 - alpha - beta_pre);
            for i in 0..total {
                let z = dist.draw(&mut rng);
                let sigma = sigma2.sqrt();
                let loss = -sigma * z;
                if i >= config.burn_in {
                    losses.push(loss);
                    true_mu.push(0.0);
                    true_sigma.push(sigma);
                }
                // beta that drives the variance of the NEXT day.
                let next_test_day = (i + 1) as i64 - test_start as i64 + 1;
                let beta = if next_test_day > *change_day as i64 {
                    *beta_post
                } else {
                    *beta_pre
                };
                sigma2 = omega + alpha * loss * loss + beta * sigma2;
            }
        }
    }

    Ok(SimulatedPath {
        losses,
        true_mu,
        true_sigma,
    })
}
