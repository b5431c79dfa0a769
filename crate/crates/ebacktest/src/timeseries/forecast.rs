//! Daily (VaR, ES) forecast streams: parametric rolling refits, empirical
//! rolling windows, the oracle forecaster, the structural-change procedure,
//! and the deliberate mis-reporting adjustments.

use crate::distributions::InnovationSpec;
use crate::estatistics::BacktestRecord;

use super::fit::{
    fit_ar_garch_qml, fit_garch_qml_zero_mean, fit_innovations, FitError, InnovationFamily,
};
use super::{
    simulate, Adjustment, ArGarchParams, Forecaster, ScenarioConfig, SimulatedPath,
    TimeSeriesError,
};

/// One-step-ahead parametric risk forecasts from fitted dynamics: the VaR and
/// ES forecasts are `mu_t + sigma_t * rho(Z)` for the fitted standardized
/// innovation `Z`. `last_innov` is the previous standardized residual.
pub fn forecast_risk(
    params: &ArGarchParams,
    spec: &InnovationSpec,
    last_loss: f64,
    last_sigma: f64,
    last_innov: f64,
    p: f64,
) -> Result<(f64, f64), TimeSeriesError> {
    let dist = spec.standardized()?;
    let q = dist.quantile(p)?;
    let es = dist.expected_shortfall(p)?;
    let mu = params.c + params.psi * last_loss;
    let eps = last_sigma * last_innov;
    let sigma2 =
        params.alpha0 + params.alpha1 * eps * eps + params.beta * last_sigma * last_sigma;
    let sigma = sigma2.max(0.0).sqrt();
    Ok((mu + sigma * q, mu + sigma * es))
}

/// Non-parametric forecasts from a rolling window of losses: the VaR forecast
/// is the order statistic at `ceil(n p)`, the ES forecast the mean of the
/// largest `floor(n (1 - p))` order statistics.
pub fn empirical_forecast(window: &[f64], p: f64) -> Result<(f64, f64), TimeSeriesError> {
    let n = window.len();
    let tail = (n as f64 * (1.0 - p) + 1e-9).floor() as usize;
    if n == 0 || tail == 0 {
        return Err(TimeSeriesError::WindowTooShort {
            len: n,
            need: (1.0 / (1.0 - p)).ceil() as usize,
        });
    }
    let mut sorted = window.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = (n as f64 * p - 1e-9).ceil().max(1.0) as usize;
    let z = sorted[idx - 1];
    let r = sorted[n - tail..].iter().sum::<f64>() / tail as f64;
    Ok((z, r))
}

fn adjust_pair(var: f64, es: f64, adjustment: Adjustment) -> (f64, f64) {
    match adjustment {
        Adjustment::Exact | Adjustment::Gamed { .. } => (var, es),
        Adjustment::MinusTenPctEs => (var, 0.9 * es),
        Adjustment::MinusTenPctBoth => (0.9 * var, 0.9 * es),
        Adjustment::PlusTenPctEs => (var, 1.1 * es),
        Adjustment::PlusTenPctBoth => (1.1 * var, 1.1 * es),
        Adjustment::MinusTenPctVar => (0.9 * var, es),
        Adjustment::PlusTenPctVar => (1.1 * var, es),
    }
}

/// A realized test span: losses, the reported forecasts for each day, and the
/// truth columns for replay and oracle checks.
#[derive(Debug, Clone)]
pub struct ScenarioStream {
    pub losses: Vec<f64>,
    pub var_forecasts: Vec<f64>,
    pub es_forecasts: Vec<f64>,
    pub true_mu: Vec<f64>,
    pub true_sigma: Vec<f64>,
    pub fit_failures: usize,
    pub adjustment: Adjustment,
}

impl ScenarioStream {
    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    /// Re-reports an exactly-forecast stream under a multiplicative
    /// adjustment. Gamed streams switch forecasters mid-run and cannot be
    /// derived post hoc.
    pub fn with_adjustment(&self, adjustment: Adjustment) -> Result<ScenarioStream, TimeSeriesError> {
        if self.adjustment != Adjustment::Exact {
            return Err(TimeSeriesError::InvalidConfig(
                "adjustment: can only re-report an exactly-forecast stream".into(),
            ));
        }
        if matches!(adjustment, Adjustment::Gamed { .. }) {
            return Err(TimeSeriesError::InvalidConfig(
                "adjustment: gamed streams must be generated, not derived".into(),
            ));
        }
        let mut out = self.clone();
        for d in 0..out.len() {
            let (z, r) = adjust_pair(out.var_forecasts[d], out.es_forecasts[d], adjustment);
            out.var_forecasts[d] = z;
            out.es_forecasts[d] = r;
        }
        out.adjustment = adjustment;
        Ok(out)
    }

    /// Records for a VaR backtest: the VaR forecast is the primary report.
    pub fn var_records(&self) -> Vec<BacktestRecord> {
        self.losses
            .iter()
            .zip(&self.var_forecasts)
            .enumerate()
            .map(|(d, (loss, var))| BacktestRecord::new(d + 1, *loss, *var, None))
            .collect()
    }

    /// Records for an (ES, VaR) backtest: ES is the primary report, VaR the
    /// auxiliary one.
    pub fn es_records(&self) -> Vec<BacktestRecord> {
        self.losses
            .iter()
            .zip(&self.es_forecasts)
            .zip(&self.var_forecasts)
            .enumerate()
            .map(|(d, ((loss, es), var))| BacktestRecord::new(d + 1, *loss, *es, Some(*var)))
            .collect()
    }
}

struct RollingFit {
    params: ArGarchParams,
    q: f64,
    es: f64,
    mu: f64,
    sigma2: f64,
}

/// Runs the one-step filter over `losses[a..b]`, returning the conditional
/// mean and variance for index `b` plus the standardized residuals of the
/// window.
fn filter_window(
    params: &ArGarchParams,
    losses: &[f64],
    a: usize,
    b: usize,
) -> (f64, f64, Vec<f64>) {
    let mut sigma2 = params.unconditional_variance().max(1e-12);
    let mut mu = if a > 0 {
        params.c + params.psi * losses[a - 1]
    } else {
        params.unconditional_mean()
    };
    let mut residuals = Vec::with_capacity(b - a);
    for j in a..b {
        let sigma = sigma2.sqrt().max(1e-9);
        let eps = losses[j] - mu;
        residuals.push(eps / sigma);
        sigma2 = (params.alpha0 + params.alpha1 * eps * eps + params.beta * sigma2).max(1e-14);
        mu = params.c + params.psi * losses[j];
    }
    (mu, sigma2, residuals)
}

fn fitted_family(forecaster: Forecaster) -> InnovationFamily {
    match forecaster {
        Forecaster::FitNormal => InnovationFamily::Normal,
        Forecaster::FitT => InnovationFamily::StudentT,
        Forecaster::FitSkewedT => InnovationFamily::SkewedT,
        _ => unreachable!("not a fitted forecaster"),
    }
}

/// Builds the daily forecast stream for an already-simulated path.
pub fn stream_from_path(
    config: &ScenarioConfig,
    path: &SimulatedPath,
) -> Result<ScenarioStream, TimeSeriesError> {
    config.validate()?;
    let pre = config.n_presample;
    let n = config.n_test;
    let p = config.level;
    assert_eq!(path.losses.len(), pre + n, "path does not match the config spans");

    let mut var_f = Vec::with_capacity(n);
    let mut es_f = Vec::with_capacity(n);
    let mut failures = 0usize;

    match config.forecaster {
        Forecaster::TrueModel => {
            let dist = config.dgp.innovation().standardized()?;
            let q = dist.quantile(p)?;
            let es = dist.expected_shortfall(p)?;
            for d in 0..n {
                let mu = path.true_mu[pre + d];
                let sigma = path.true_sigma[pre + d];
                var_f.push(mu + sigma * q);
                es_f.push(mu + sigma * es);
            }
        }
        Forecaster::Empirical => {
            for d in 0..n {
                let idx = pre + d;
                let (z, r) = empirical_forecast(&path.losses[idx - config.fit_window..idx], p)?;
                var_f.push(z);
                es_f.push(r);
            }
        }
        Forecaster::FilteredEmpirical => {
            let params = fit_garch_qml_zero_mean(&path.losses[..pre])?;
            let mut sigma2 = params.unconditional_variance().max(1e-12);
            let mut residuals = Vec::with_capacity(pre);
            let mut test_sigmas = Vec::with_capacity(n);
            for (j, loss) in path.losses.iter().enumerate() {
                let sigma = sigma2.sqrt().max(1e-9);
                if j < pre {
                    residuals.push(loss / sigma);
                } else {
                    test_sigmas.push(sigma);
                }
                sigma2 = (params.alpha0 + params.alpha1 * loss * loss + params.beta * sigma2)
                    .max(1e-14);
            }
            let (q_emp, es_emp) = empirical_forecast(&residuals, p)?;
            for sigma in test_sigmas {
                var_f.push(sigma * q_emp);
                es_f.push(sigma * es_emp);
            }
        }
        _ => {
            // Rolling QML refits; the gamed protocol swaps the innovation
            // family at the switch day.
            let family_for = |d: usize| match config.adjustment {
                Adjustment::Gamed { switch_day } => {
                    if d + 1 <= switch_day {
                        InnovationFamily::SkewedT
                    } else {
                        InnovationFamily::Normal
                    }
                }
                _ => fitted_family(config.forecaster),
            };
            let mut state: Option<RollingFit> = None;
            let mut last_params: Option<ArGarchParams> = None;
            let mut current_family = family_for(0);
            for d in 0..n {
                let idx = pre + d;
                let family = family_for(d);
                let refit =
                    state.is_none() || d % config.refit_interval == 0 || family != current_family;
                if refit {
                    current_family = family;
                    let window = &path.losses[idx - config.fit_window..idx];
                    let params = match fit_ar_garch_qml(window) {
                        Ok(params) => params,
                        Err(FitError::NonConvergence { best, .. }) => {
                            failures += 1;
                            last_params.unwrap_or(best)
                        }
                        Err(e) => match last_params {
                            Some(prev) => {
                                failures += 1;
                                prev
                            }
                            None => return Err(e.into()),
                        },
                    };
                    last_params = Some(params);
                    let (mu, sigma2, residuals) =
                        filter_window(&params, &path.losses, idx - config.fit_window, idx);
                    let spec = match fit_innovations(&residuals, family) {
                        Ok(spec) => spec,
                        Err(_) => {
                            failures += 1;
                            InnovationSpec::Normal
                        }
                    };
                    let dist = spec.standardized()?;
                    state = Some(RollingFit {
                        params,
                        q: dist.quantile(p)?,
                        es: dist.expected_shortfall(p)?,
                        mu,
                        sigma2,
                    });
                }
                let st = state.as_mut().expect("state initialized above");
                let sigma = st.sigma2.sqrt();
                var_f.push(st.mu + sigma * st.q);
                es_f.push(st.mu + sigma * st.es);
                // Observe today's loss and roll the filter forward.
                let loss = path.losses[idx];
                let eps = loss - st.mu;
                st.sigma2 = (st.params.alpha0
                    + st.params.alpha1 * eps * eps
                    + st.params.beta * st.sigma2)
                    .max(1e-14);
                st.mu = st.params.c + st.params.psi * loss;
            }
        }
    }

    match config.adjustment {
        Adjustment::Gamed { switch_day } => {
            for d in 0..switch_day.min(n) {
                var_f[d] *= 1.1;
                es_f[d] *= 1.1;
            }
        }
        adj => {
            for d in 0..n {
                let (z, r) = adjust_pair(var_f[d], es_f[d], adj);
                var_f[d] = z;
                es_f[d] = r;
            }
        }
    }

    Ok(ScenarioStream {
        losses: path.losses[pre..].to_vec(),
        var_forecasts: var_f,
        es_forecasts: es_f,
        true_mu: path.true_mu[pre..].to_vec(),
        true_sigma: path.true_sigma[pre..].to_vec(),
        fit_failures: failures,
        adjustment: config.adjustment,
    })
}

/// Simulates a path and builds its forecast stream, deterministically in
/// `seed`.
pub fn generate_stream(config: &ScenarioConfig, seed: u64) -> Result<ScenarioStream, TimeSeriesError> {
    let path = simulate(config, seed)?;
    stream_from_path(config, &path)
}
