//! Backtest e-statistics.
//!
//! An e-statistic maps a realized loss `x` and reported forecasts `(r, z)` to
//! a nonnegative value whose mean is at most 1 whenever the primary forecast
//! `r` does not underestimate the true functional (with the auxiliary
//! forecast `z` reported truthfully), and exceeds 1 under underestimation.
//! Large realized values are therefore evidence against the reports.
//!
//! Extended-real conventions are part of the contract and are load-bearing:
//! `0/0 = 1`, `positive/0 = +inf`, and the (ES, VaR) statistic is `+inf`
//! whenever `r < z`. Values of `+inf` are representable (`f64::INFINITY`) and
//! propagate to the e-process, which decides their effect.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EStatError {
    #[error("probability level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("value {value} lies below the floor {floor}")]
    BelowFloor { value: f64, floor: f64 },
    #[error("variance forecast must be nonnegative, got {0}")]
    NegativeVariance(f64),
    #[error("mixture weight must lie in [0, 1], got {0}")]
    InvalidWeight(f64),
    #[error("mixture weights violate h + k <= 1 (h={h}, k={k})")]
    WeightSum { h: f64, k: f64 },
    #[error("the monotone quantile form admits only a constant mixture weight")]
    NonConstantWeight,
    #[error("family requires an auxiliary forecast z, none supplied")]
    MissingAuxiliary,
}

/// One day of backtest input: realized loss plus the forecasts reported for
/// it. `r` is the primary forecast (e.g. ES), `z` the auxiliary one (e.g.
/// VaR), absent for single-functional backtests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestRecord {
    pub t: usize,
    pub loss: f64,
    pub r: f64,
    pub z: Option<f64>,
}

impl BacktestRecord {
    pub fn new(t: usize, loss: f64, r: f64, z: Option<f64>) -> Self {
        BacktestRecord { t, loss, r, z }
    }

    /// An (ES, VaR) pair with `r < z` is a legal input but maps to an e-value
    /// of `+inf`; callers may want to flag such rows.
    pub fn has_degenerate_pair(&self) -> bool {
        matches!(self.z, Some(z) if self.r < z)
    }
}

/// Division with the extended-real conventions `0/0 = 1`, `y/0 = +inf`.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// E-statistic for the mean with known floor `a`: `(x - a) / (r - a)`.
pub fn eval_mean(x: f64, r: f64, a: f64) -> Result<f64, EStatError> {
    if x < a {
        return Err(EStatError::BelowFloor { value: x, floor: a });
    }
    if r < a {
        return Err(EStatError::BelowFloor { value: r, floor: a });
    }
    Ok(ratio(x - a, r - a))
}

/// E-statistic for the (variance, mean) pair: `(x - z)^2 / r`.
pub fn eval_variance(x: f64, r: f64, z: f64) -> Result<f64, EStatError> {
    if r < 0.0 {
        return Err(EStatError::NegativeVariance(r));
    }
    let dev = x - z;
    Ok(ratio(dev * dev, r))
}

/// E-statistic for the lower `p`-quantile: `1{x > r} / (1 - p)`.
pub fn eval_quantile(x: f64, r: f64, p: f64) -> Result<f64, EStatError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EStatError::InvalidLevel(p));
    }
    Ok(if x > r { 1.0 / (1.0 - p) } else { 0.0 })
}

/// E-statistic for the (ES, VaR) pair at level `p`:
/// `(x - z)_+ / ((1 - p)(r - z))`, with `+inf` when `r < z`.
pub fn eval_es(x: f64, r: f64, z: f64, p: f64) -> Result<f64, EStatError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EStatError::InvalidLevel(p));
    }
    if r < z {
        return Ok(f64::INFINITY);
    }
    if r == f64::INFINITY {
        // An unbounded primary report can never be an underestimate; any
        // finite loss scores zero (this also covers z = +inf, where the
        // difference r - z is indeterminate).
        return Ok(0.0);
    }
    Ok(ratio((x - z).max(0.0), (1.0 - p) * (r - z)))
}

/// The dominating mixture form `1 - h + h * e` shared by the
/// characterization results for the mean, variance, quantile, and (ES, VaR).
pub fn mixture_form(base_e: f64, h: f64) -> Result<f64, EStatError> {
    if !(0.0..=1.0).contains(&h) {
        return Err(EStatError::InvalidWeight(h));
    }
    if h == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - h + h * base_e)
}

/// Mixture form for the (ES, VaR) characterization with the optional
/// discontinuous term `k (p - 1{x <= z}) / (1 - p)`, subject to `h + k <= 1`.
pub fn mixture_form_with_k(
    base_e: f64,
    h: f64,
    k: f64,
    x: f64,
    z: f64,
    p: f64,
) -> Result<f64, EStatError> {
    if !(0.0..=1.0).contains(&k) {
        return Err(EStatError::InvalidWeight(k));
    }
    if h + k > 1.0 + 1e-12 {
        return Err(EStatError::WeightSum { h, k });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(EStatError::InvalidLevel(p));
    }
    let indicator = if x <= z { 1.0 } else { 0.0 };
    Ok(mixture_form(base_e, h)? + k * (p - indicator) / (1.0 - p))
}

/// Primary coordinate of the identification function induced by a
/// non-conservative backtest e-statistic: `1 - e`. Under the null at the true
/// functional value this has mean zero.
pub fn identification_function(base_e_value: f64) -> f64 {
    1.0 - base_e_value
}

/// The e-statistic families supported by the backtesting engine.
#[derive(Debug, Clone, Copy)]
pub enum Family {
    /// Mean of a variable bounded below by `floor`.
    MeanFloor { floor: f64 },
    /// Expected loss `E[l(X)]` where the transform `l` maps into
    /// `[floor, inf)`.
    ExpectedLoss {
        floor: f64,
        transform: fn(f64) -> f64,
    },
    /// (variance, mean) pair; `r` forecasts the variance, `z` the mean.
    Variance,
    /// Lower `level`-quantile (VaR); `r` forecasts the quantile.
    Quantile { level: f64 },
    /// (ES, VaR) pair at `level`; `r` forecasts ES, `z` forecasts VaR.
    EsPair { level: f64 },
}

impl Family {
    fn validate(&self) -> Result<(), EStatError> {
        match self {
            Family::Quantile { level } | Family::EsPair { level } => {
                if !(*level > 0.0 && *level < 1.0) {
                    return Err(EStatError::InvalidLevel(*level));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Mixture weight: constant, or a function of the current forecasts.
#[derive(Debug, Clone, Copy)]
pub enum MixtureWeight {
    Constant(f64),
    OfForecast(fn(f64, Option<f64>) -> f64),
}

/// A configured backtest e-statistic: a family plus the mixture weights of
/// the dominating characterization form. The default keeps `h = 1` (the raw
/// statistic); the tradable weight lambda is supplied by the betting layer,
/// not here.
#[derive(Debug, Clone, Copy)]
pub struct EStatistic {
    family: Family,
    h: MixtureWeight,
    k: f64,
}

impl EStatistic {
    pub fn new(family: Family) -> Result<Self, EStatError> {
        family.validate()?;
        Ok(EStatistic {
            family,
            h: MixtureWeight::Constant(1.0),
            k: 0.0,
        })
    }

    /// VaR backtest at `level`.
    pub fn quantile(level: f64) -> Result<Self, EStatError> {
        EStatistic::new(Family::Quantile { level })
    }

    /// (ES, VaR) backtest at `level`.
    pub fn es_pair(level: f64) -> Result<Self, EStatError> {
        EStatistic::new(Family::EsPair { level })
    }

    /// Mixture-form constructor. The monotone quantile form admits only a
    /// constant weight; a forecast-dependent `h` is rejected there. The
    /// discontinuous `k`-term applies to the Quantile and EsPair families
    /// only, with `h + k <= 1`.
    pub fn with_mixture(family: Family, h: MixtureWeight, k: f64) -> Result<Self, EStatError> {
        family.validate()?;
        match h {
            MixtureWeight::Constant(c) => {
                if !(0.0..=1.0).contains(&c) {
                    return Err(EStatError::InvalidWeight(c));
                }
                if !(0.0..=1.0).contains(&k) {
                    return Err(EStatError::InvalidWeight(k));
                }
                if c + k > 1.0 + 1e-12 {
                    return Err(EStatError::WeightSum { h: c, k });
                }
            }
            MixtureWeight::OfForecast(_) => {
                if matches!(family, Family::Quantile { .. }) {
                    return Err(EStatError::NonConstantWeight);
                }
                if k != 0.0 {
                    return Err(EStatError::NonConstantWeight);
                }
            }
        }
        if k != 0.0 && !matches!(family, Family::Quantile { .. } | Family::EsPair { .. }) {
            return Err(EStatError::InvalidWeight(k));
        }
        Ok(EStatistic { family, h, k })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Probability level for quantile and (ES, VaR) families.
    pub fn level(&self) -> Option<f64> {
        match self.family {
            Family::Quantile { level } | Family::EsPair { level } => Some(level),
            _ => None,
        }
    }

    pub fn requires_auxiliary(&self) -> bool {
        matches!(self.family, Family::Variance | Family::EsPair { .. })
    }

    /// Evaluates the raw family statistic, before mixing.
    pub fn base(&self, loss: f64, r: f64, z: Option<f64>) -> Result<f64, EStatError> {
        match self.family {
            Family::MeanFloor { floor } => eval_mean(loss, r, floor),
            Family::ExpectedLoss { floor, transform } => eval_mean(transform(loss), r, floor),
            Family::Variance => eval_variance(loss, r, z.ok_or(EStatError::MissingAuxiliary)?),
            Family::Quantile { level } => eval_quantile(loss, r, level),
            Family::EsPair { level } => {
                eval_es(loss, r, z.ok_or(EStatError::MissingAuxiliary)?, level)
            }
        }
    }

    /// Evaluates the configured statistic, including the mixture weights.
    pub fn evaluate(&self, loss: f64, r: f64, z: Option<f64>) -> Result<f64, EStatError> {
        let base = self.base(loss, r, z)?;
        let h = match self.h {
            MixtureWeight::Constant(c) => c,
            MixtureWeight::OfForecast(f) => {
                let v = f(r, z);
                if !(0.0..=1.0).contains(&v) {
                    return Err(EStatError::InvalidWeight(v));
                }
                v
            }
        };
        if self.k == 0.0 {
            return mixture_form(base, h);
        }
        let (level, pivot) = match self.family {
            Family::Quantile { level } => (level, r),
            Family::EsPair { level } => (level, z.ok_or(EStatError::MissingAuxiliary)?),
            _ => unreachable!("k validated to be zero for other families"),
        };
        mixture_form_with_k(base, h, self.k, loss, pivot, level)
    }

    /// Evaluates a full record.
    pub fn evaluate_record(&self, rec: &BacktestRecord) -> Result<f64, EStatError> {
        self.evaluate(rec.loss, rec.r, rec.z)
    }
}
