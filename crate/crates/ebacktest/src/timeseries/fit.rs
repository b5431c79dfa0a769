//! Quasi-maximum-likelihood fitting of the AR-GARCH dynamics and maximum
//! likelihood for the innovation family.
//!
//! The Gaussian QML objective is maximized by Nelder–Mead in a transformed
//! space that enforces `alpha0 > 0`, `alpha1, beta >= 0`, and
//! `alpha1 + beta < 1`, restarting from perturbed moment-based
//! initializations. Innovation parameters are fitted afterwards on the
//! standardized residuals.

use thiserror::Error;

use super::ArGarchParams;
use crate::distributions::InnovationSpec;
use crate::numeric::nelder_mead;

/// Minimum window length for a GARCH fit.
pub const MIN_FIT_WINDOW: usize = 100;
/// Minimum residual count for an innovation fit.
pub const MIN_RESIDUALS: usize = 100;
/// Lower bound for fitted degrees of freedom (variance standardization needs
/// shape > 2).
const SHAPE_FLOOR: f64 = 2.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("window of {len} losses too short for fitting, need {min}")]
    WindowTooShort { len: usize, min: usize },
    #[error("degenerate window: losses have no variance")]
    DegenerateWindow,
    #[error("likelihood search did not converge; best objective {nll}")]
    NonConvergence { best: ArGarchParams, nll: f64 },
    #[error("{len} residuals too few for an innovation fit, need {min}")]
    TooFewResiduals { len: usize, min: usize },
}

struct Transform {
    c_scale: f64,
    zero_mean: bool,
}

impl Transform {
    fn to_params(&self, u: &[f64]) -> ArGarchParams {
        let (c, psi, rest) = if self.zero_mean {
            (0.0, 0.0, u)
        } else {
            (u[0] * self.c_scale, u[1].tanh(), &u[2..])
        };
        let alpha0 = rest[0].exp();
        let persistence = 0.9999 * sigmoid(rest[1]);
        let frac = sigmoid(rest[2]);
        ArGarchParams {
            c,
            psi,
            alpha0,
            alpha1: persistence * frac,
            beta: persistence * (1.0 - frac),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Negative Gaussian conditional log-likelihood (up to constants kept for
/// comparability across fits).
fn gaussian_nll(params: &ArGarchParams, losses: &[f64]) -> f64 {
    let mut sigma2 = params.unconditional_variance().max(1e-12);
    let mut nll = 0.0;
    for t in 1..losses.len() {
        let mu = params.c + params.psi * losses[t - 1];
        let eps = losses[t] - mu;
        nll += 0.5 * (sigma2.ln() + eps * eps / sigma2);
        sigma2 = (params.alpha0 + params.alpha1 * eps * eps + params.beta * sigma2).max(1e-14);
    }
    if nll.is_nan() {
        f64::INFINITY
    } else {
        nll
    }
}

fn fit_qml(losses: &[f64], zero_mean: bool) -> Result<ArGarchParams, FitError> {
    if losses.len() < MIN_FIT_WINDOW {
        return Err(FitError::WindowTooShort {
            len: losses.len(),
            min: MIN_FIT_WINDOW,
        });
    }
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let var = losses.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var <= 0.0 || !var.is_finite() {
        return Err(FitError::DegenerateWindow);
    }

    // Moment-based initialization: lag-1 autocorrelation for psi, the
    // implied residual variance for alpha0, and a conventional 0.1/0.8 split
    // of the GARCH persistence.
    let cov1: f64 = losses
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum::<f64>()
        / n;
    let psi0 = (cov1 / var).clamp(-0.9, 0.9);
    let resid_var = (var * (1.0 - psi0 * psi0)).max(var * 0.05);
    let transform = Transform {
        c_scale: var.sqrt().max(1e-6),
        zero_mean,
    };

    let base_tail = |a0: f64, pers: f64, frac: f64| -> Vec<f64> {
        vec![a0.ln(), logit(pers / 0.9999), logit(frac)]
    };
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for (pers, frac, a0_mult) in [(0.9, 1.0 / 9.0, 0.1), (0.6, 0.25, 0.4), (0.97, 0.3, 0.05)] {
        let tail = base_tail((resid_var * a0_mult).max(1e-12), pers, frac);
        if zero_mean {
            starts.push(tail);
        } else {
            let c0 = mean * (1.0 - psi0) / transform.c_scale;
            let mut u = vec![c0, psi0.atanh()];
            u.extend(tail);
            starts.push(u);
        }
    }

    let objective = |u: &[f64]| gaussian_nll(&transform.to_params(u), losses);
    let mut best: Option<(ArGarchParams, f64, bool)> = None;
    for start in &starts {
        let res = nelder_mead(&objective, start, 0.4, 600, 1e-9);
        let params = transform.to_params(&res.x);
        let better = best.as_ref().map(|b| res.value < b.1).unwrap_or(true);
        if better {
            best = Some((params, res.value, res.converged));
        } else if let Some(b) = best.as_mut() {
            b.2 |= res.converged && (res.value - b.1).abs() < 1e-4 * (1.0 + b.1.abs());
        }
    }
    let (params, nll, converged) = best.expect("at least one restart ran");
    if !converged || !nll.is_finite() {
        return Err(FitError::NonConvergence { best: params, nll });
    }
    Ok(params)
}

/// Fits AR(1)-GARCH(1,1) dynamics by Gaussian quasi-maximum likelihood.
pub fn fit_ar_garch_qml(window: &[f64]) -> Result<ArGarchParams, FitError> {
    fit_qml(window, false)
}

/// Zero-mean GARCH(1,1) QML fit (`c = psi = 0`), as used by the
/// structural-change forecaster.
pub fn fit_garch_qml_zero_mean(window: &[f64]) -> Result<ArGarchParams, FitError> {
    fit_qml(window, true)
}

/// Innovation family selector for [`fit_innovations`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnovationFamily {
    Normal,
    StudentT,
    SkewedT,
}

/// Maximum-likelihood fit of the standardized innovation distribution on
/// standardized residuals. `Normal` needs no fit and is returned unchanged.
pub fn fit_innovations(
    residuals: &[f64],
    family: InnovationFamily,
) -> Result<InnovationSpec, FitError> {
    if family == InnovationFamily::Normal {
        return Ok(InnovationSpec::Normal);
    }
    if residuals.len() < MIN_RESIDUALS {
        return Err(FitError::TooFewResiduals {
            len: residuals.len(),
            min: MIN_RESIDUALS,
        });
    }

    let spec_of = |u: &[f64]| -> InnovationSpec {
        let shape = SHAPE_FLOOR + u[0].exp();
        match family {
            InnovationFamily::StudentT => InnovationSpec::StudentT { shape },
            InnovationFamily::SkewedT => InnovationSpec::SkewedT {
                shape,
                skewness: u[1].exp(),
            },
            InnovationFamily::Normal => unreachable!(),
        }
    };
    let nll = |u: &[f64]| -> f64 {
        let dist = match spec_of(u).standardized() {
            Ok(d) => d,
            Err(_) => return f64::INFINITY,
        };
        let v: f64 = residuals
            .iter()
            .map(|x| -(dist.pdf(*x).max(1e-300).ln()))
            .sum();
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let start = match family {
        InnovationFamily::StudentT => vec![(8.0f64 - SHAPE_FLOOR).ln()],
        InnovationFamily::SkewedT => vec![(8.0f64 - SHAPE_FLOOR).ln(), 0.0],
        InnovationFamily::Normal => unreachable!(),
    };
    let res = nelder_mead(&nll, &start, 0.5, 400, 1e-9);
    let spec = spec_of(&res.x);
    if let InnovationSpec::StudentT { shape } | InnovationSpec::SkewedT { shape, .. } = spec {
        if shape < SHAPE_FLOOR + 0.01 {
            log::warn!("fitted shape {shape:.3} clamped near the nu > 2 boundary");
        }
    }
    Ok(spec)
}
