//! Betting processes: how much of the current wealth to stake on each day's
//! e-value.
//!
//! All rules solve, exactly or approximately, the same concave program
//!
//! ```text
//!     maximize   E[ log(1 - lambda + lambda * E) ]   over lambda in [0, gamma]
//! ```
//!
//! and differ only in which distribution the expectation is taken under:
//!
//! * GRO  — a supplied alternative model for the next loss (the oracle rule);
//! * GREE — the empirical distribution of past realized e-values;
//! * GREL — the empirical distribution of past losses, evaluated at the
//!   CURRENT forecasts;
//! * GREM — the 50/50 wealth mixture of the GREE and GREL e-processes;
//! * Taylor variants — a second-order expansion of the objective, giving
//!   closed-form stakes;
//! * Fixed — a constant stake.
//!
//! Every rule is predictable: the stake for day `t` depends only on data
//! through day `t - 1` plus the forecasts reported for day `t`. The cap
//! `gamma < 1` keeps the wealth away from absolute ruin.

use std::sync::Arc;

use thiserror::Error;

use crate::estatistics::{EStatError, EStatistic, Family};
use crate::numeric::{gauss_legendre_512, golden_section_max};

/// Default cap on the betting fraction.
pub const DEFAULT_GAMMA: f64 = 0.5;
/// Replacement for infinite e-values inside empirical objectives.
pub const DEFAULT_INF_CAP: f64 = 1e12;
/// Absolute tolerance on lambda for the golden-section solve.
const LAMBDA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BettingError {
    #[error("empty sample: no history yet, caller should bet zero")]
    Warmup,
    #[error("betting cap must lie in (0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("fixed lambda {lambda} outside [0, {gamma}]")]
    InvalidFixedLambda { lambda: f64, gamma: f64 },
    #[error("objective is not integrable (NaN in induced e-values)")]
    NonIntegrable,
    #[error("e-statistic error: {0}")]
    EStat(#[from] EStatError),
}

/// Solves the log-growth program on a weighted sample of e-values.
///
/// Ties (a flat objective, e.g. every value equal to 1) break to zero: the
/// solver returns 0 whenever the sample mean is at most 1, which is exactly
/// the condition for the optimum to sit at the left boundary. A `+inf` atom
/// forces `gamma` unless a zero atom is also present, in which case the
/// infinity is replaced by `inf_cap` and the capped objective is maximized.
pub fn solve_log_growth_capped(
    sample: &[(f64, f64)],
    gamma_cap: f64,
    inf_cap: f64,
) -> Result<f64, BettingError> {
    if sample.is_empty() {
        return Err(BettingError::Warmup);
    }
    if !(gamma_cap > 0.0 && gamma_cap <= 1.0) {
        return Err(BettingError::InvalidGamma(gamma_cap));
    }
    let mut total_w = 0.0;
    let mut has_inf = false;
    let mut has_zero = false;
    for (v, w) in sample {
        if v.is_nan() || *v < 0.0 || w.is_nan() || *w < 0.0 {
            return Err(BettingError::NonIntegrable);
        }
        if *w == 0.0 {
            continue;
        }
        total_w += w;
        if v.is_infinite() {
            has_inf = true;
        }
        if *v == 0.0 {
            has_zero = true;
        }
    }
    if total_w <= 0.0 {
        return Err(BettingError::Warmup);
    }
    if has_inf && !has_zero {
        return Ok(gamma_cap);
    }

    let capped = |v: f64| if v.is_infinite() { inf_cap } else { v };
    let mean: f64 = sample
        .iter()
        .map(|(v, w)| w * capped(*v))
        .sum::<f64>()
        / total_w;
    if mean <= 1.0 {
        return Ok(0.0);
    }

    let objective = |lambda: f64| {
        sample
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(v, w)| w * (1.0 - lambda + lambda * capped(*v)).ln())
            .sum::<f64>()
            / total_w
    };
    let (lambda, _) = golden_section_max(objective, 0.0, gamma_cap, LAMBDA_TOL);
    Ok(lambda.clamp(0.0, gamma_cap))
}

/// [`solve_log_growth_capped`] with the default infinity cap.
pub fn solve_log_growth(sample: &[(f64, f64)], gamma_cap: f64) -> Result<f64, BettingError> {
    solve_log_growth_capped(sample, gamma_cap, DEFAULT_INF_CAP)
}

/// Equal-weight solve over a plain slice of e-values. Repeated values are
/// merged into weighted atoms first, which keeps the objective cheap when the
/// sample lives on a few support points.
pub fn solve_log_growth_equal(values: &[f64], gamma_cap: f64) -> Result<f64, BettingError> {
    if values.is_empty() {
        return Err(BettingError::Warmup);
    }
    let w = 1.0 / values.len() as f64;
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for v in sorted {
        match atoms.last_mut() {
            Some((val, weight)) if (*val == v) || (val.is_nan() && v.is_nan()) => *weight += w,
            _ => atoms.push((v, w)),
        }
    }
    solve_log_growth(&atoms, gamma_cap)
}

/// A conditional law for the next loss, as supplied by an alternative model:
/// either finite support (values with weights) or a quantile function, which
/// is integrated on 512 Gauss–Legendre nodes.
#[derive(Clone)]
pub enum Law {
    Finite(Vec<(f64, f64)>),
    Quantile(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Law {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Law::Finite(atoms) => f.debug_tuple("Finite").field(&atoms.len()).finish(),
            Law::Quantile(_) => f.write_str("Quantile(..)"),
        }
    }
}

/// Supplies the conditional law of the loss for each day; the GRO rule bets
/// optimally against it.
pub trait AlternativeModel: Send + Sync {
    fn law(&self, t: usize) -> Law;
}

impl<F: Fn(usize) -> Law + Send + Sync> AlternativeModel for F {
    fn law(&self, t: usize) -> Law {
        self(t)
    }
}

/// Growth-rate-optimal stake against a supplied alternative law.
pub fn gro_lambda(
    law: &Law,
    estat: &EStatistic,
    r: f64,
    z: Option<f64>,
    gamma_cap: f64,
) -> Result<f64, BettingError> {
    let induced: Vec<(f64, f64)> = match law {
        Law::Finite(atoms) => atoms
            .iter()
            .map(|(x, w)| Ok((estat.evaluate(*x, r, z)?, *w)))
            .collect::<Result<_, BettingError>>()?,
        Law::Quantile(q) => {
            let (nodes, weights) = gauss_legendre_512();
            nodes
                .iter()
                .zip(weights)
                .map(|(x, w)| {
                    let u = 0.5 * (x + 1.0);
                    Ok((estat.evaluate(q(u), r, z)?, 0.5 * w))
                })
                .collect::<Result<_, BettingError>>()?
        }
    };
    if induced.iter().any(|(v, _)| v.is_nan()) {
        return Err(BettingError::NonIntegrable);
    }
    solve_log_growth(&induced, gamma_cap)
}

/// Empirical-e-value stake: the log-growth solve on the (windowed) history of
/// realized e-values. Empty history bets zero.
pub fn gree_lambda(state: &BettingState, gamma_cap: f64, window: Option<usize>) -> f64 {
    let hist = state.window_e(window);
    solve_log_growth_equal(hist, gamma_cap).unwrap_or(0.0)
}

/// Empirical-loss stake: the log-growth solve on past losses re-evaluated at
/// the current forecasts.
pub fn grel_lambda(
    state: &BettingState,
    estat: &EStatistic,
    r: f64,
    z: Option<f64>,
    gamma_cap: f64,
    window: Option<usize>,
) -> Result<f64, BettingError> {
    let losses = state.window_loss(window);
    if losses.is_empty() {
        return Ok(0.0);
    }
    let evalues: Vec<f64> = losses
        .iter()
        .map(|l| estat.evaluate(*l, r, z))
        .collect::<Result<_, _>>()?;
    Ok(solve_log_growth_equal(&evalues, gamma_cap).unwrap_or(0.0))
}

/// Deviations below this (relative to the natural scale of the e-values) are
/// floating-point noise; a history that is calibrated up to noise bets zero
/// rather than letting a noise/noise^2 ratio explode to the cap.
const TAYLOR_NOISE: f64 = 1e-9;

fn taylor_ratio(num: f64, den: f64, n: f64, scale: f64, gamma_cap: f64) -> f64 {
    let noise = TAYLOR_NOISE * scale;
    if den <= n * noise * noise {
        return if num > n * scale * noise { gamma_cap } else { 0.0 };
    }
    (num / den).clamp(0.0, gamma_cap)
}

/// Second-order (Taylor) approximation of the log-growth stake on a history
/// of e-values: `clamp((sum e - n) / sum (e - 1)^2, 0, gamma)`.
pub fn taylor_lambda_generic(evalues: &[f64], gamma_cap: f64) -> f64 {
    if evalues.is_empty() {
        return 0.0;
    }
    let n = evalues.len() as f64;
    let capped = |v: f64| if v.is_infinite() { DEFAULT_INF_CAP } else { v };
    let num: f64 = evalues.iter().map(|e| capped(*e) - 1.0).sum();
    let den: f64 = evalues
        .iter()
        .map(|e| {
            let d = capped(*e) - 1.0;
            d * d
        })
        .sum();
    taylor_ratio(num, den, n, 1.0, gamma_cap)
}

/// Closed-form Taylor stake for the quantile e-statistic with a common
/// threshold `r` applied to all past losses (the empirical-loss variant).
pub fn taylor_var_grel(losses: &[f64], r: f64, p: f64, gamma_cap: f64) -> f64 {
    let n = losses.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let below: f64 = losses.iter().filter(|l| **l <= r).count() as f64;
    let num = (1.0 - p) * (n * p - below);
    let den = n * p * p + (1.0 - 2.0 * p) * below;
    if den == 0.0 {
        return if num > 0.0 { gamma_cap } else { 0.0 };
    }
    (num / den).clamp(0.0, gamma_cap)
}

/// Quantile Taylor stake with per-day thresholds (the empirical-e variant:
/// each past day keeps its own reported forecast).
pub fn taylor_var_gree(losses: &[f64], thresholds: &[f64], p: f64, gamma_cap: f64) -> f64 {
    debug_assert_eq!(losses.len(), thresholds.len());
    let n = losses.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let below: f64 = losses
        .iter()
        .zip(thresholds)
        .filter(|(l, r)| l <= r)
        .count() as f64;
    let num = (1.0 - p) * (n * p - below);
    let den = n * p * p + (1.0 - 2.0 * p) * below;
    if den == 0.0 {
        return if num > 0.0 { gamma_cap } else { 0.0 };
    }
    (num / den).clamp(0.0, gamma_cap)
}

/// Closed-form Taylor stake for the (ES, VaR) e-statistic with the current
/// forecast pair applied to all past losses.
pub fn taylor_es_grel(losses: &[f64], r: f64, z: f64, p: f64, gamma_cap: f64) -> f64 {
    if losses.is_empty() {
        return 0.0;
    }
    if r < z {
        // Flagged pair: every e-value is infinite.
        return gamma_cap;
    }
    if r == z {
        return if losses.iter().any(|l| *l > z) {
            gamma_cap
        } else {
            0.0
        };
    }
    let n = losses.len() as f64;
    let scale = (1.0 - p) * (r - z);
    let excess: f64 = losses.iter().map(|l| (l - z).max(0.0)).sum();
    let num = scale * (excess - n * scale);
    let den: f64 = losses
        .iter()
        .map(|l| {
            let d = (l - z).max(0.0) - scale;
            d * d
        })
        .sum();
    taylor_ratio(num, den, n, scale, gamma_cap)
}

/// (ES, VaR) Taylor stake with per-day forecast pairs: each summand keeps the
/// forecasts reported for its own day, so the formula coincides with the
/// generic expansion applied to the realized e-values.
pub fn taylor_es_gree(
    losses: &[f64],
    es_forecasts: &[f64],
    var_forecasts: &[f64],
    p: f64,
    gamma_cap: f64,
) -> f64 {
    debug_assert_eq!(losses.len(), es_forecasts.len());
    debug_assert_eq!(losses.len(), var_forecasts.len());
    if losses.is_empty() {
        return 0.0;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((l, r), z) in losses.iter().zip(es_forecasts).zip(var_forecasts) {
        let e = if r < z {
            DEFAULT_INF_CAP
        } else {
            let scale = (1.0 - p) * (r - z);
            let excess = (l - z).max(0.0);
            if scale == 0.0 {
                if excess > 0.0 {
                    DEFAULT_INF_CAP
                } else {
                    1.0
                }
            } else {
                excess / scale
            }
        };
        num += e - 1.0;
        den += (e - 1.0) * (e - 1.0);
    }
    taylor_ratio(num, den, losses.len() as f64, 1.0, gamma_cap)
}

/// Wealth-weighted mixture stake: the bet that makes the mixture wealth
/// `(M_t^GREE + M_t^GREL)/2` evolve as a single e-process.
pub fn grem_combine(
    gree_log_wealth: f64,
    grel_log_wealth: f64,
    lambda_gree: f64,
    lambda_grel: f64,
) -> f64 {
    let a = gree_log_wealth;
    let b = grel_log_wealth;
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a == f64::NEG_INFINITY {
        return lambda_grel;
    }
    if b == f64::NEG_INFINITY {
        return lambda_gree;
    }
    let w = match (a.is_infinite(), b.is_infinite()) {
        (true, true) => 0.5,
        (true, false) => 1.0,
        (false, true) => 0.0,
        (false, false) => 1.0 / (1.0 + (b - a).exp()),
    };
    w * lambda_gree + (1.0 - w) * lambda_grel
}

/// Which stake rule is in force.
#[derive(Clone)]
pub enum StrategyKind {
    Gro(Arc<dyn AlternativeModel>),
    Gree,
    Grel,
    Grem,
    TaylorGree,
    TaylorGrel,
    TaylorGrem,
    Fixed(f64),
}

impl std::fmt::Debug for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StrategyKind::Gro(_) => f.write_str("Gro(..)"),
            StrategyKind::Gree => f.write_str("Gree"),
            StrategyKind::Grel => f.write_str("Grel"),
            StrategyKind::Grem => f.write_str("Grem"),
            StrategyKind::TaylorGree => f.write_str("TaylorGree"),
            StrategyKind::TaylorGrel => f.write_str("TaylorGrel"),
            StrategyKind::TaylorGrem => f.write_str("TaylorGrem"),
            StrategyKind::Fixed(l) => write!(f, "Fixed({l})"),
        }
    }
}

/// A stake rule plus its cap, optional rolling window, and warmup length.
#[derive(Debug, Clone)]
pub struct BettingStrategy {
    pub kind: StrategyKind,
    pub gamma_cap: f64,
    pub window: Option<usize>,
    pub warmup: usize,
}

impl BettingStrategy {
    pub fn new(kind: StrategyKind) -> Self {
        // The empirical rules bet zero on day one anyway (no history); a
        // positive warmup only matters for Fixed and GRO.
        BettingStrategy {
            kind,
            gamma_cap: DEFAULT_GAMMA,
            window: None,
            warmup: 0,
        }
    }

    pub fn gree() -> Self {
        Self::new(StrategyKind::Gree)
    }

    pub fn grel() -> Self {
        Self::new(StrategyKind::Grel)
    }

    pub fn grem() -> Self {
        Self::new(StrategyKind::Grem)
    }

    pub fn taylor_gree() -> Self {
        Self::new(StrategyKind::TaylorGree)
    }

    pub fn taylor_grel() -> Self {
        Self::new(StrategyKind::TaylorGrel)
    }

    pub fn taylor_grem() -> Self {
        Self::new(StrategyKind::TaylorGrem)
    }

    pub fn gro(model: Arc<dyn AlternativeModel>) -> Self {
        Self::new(StrategyKind::Gro(model))
    }

    pub fn fixed(lambda: f64) -> Result<Self, BettingError> {
        let strategy = Self::new(StrategyKind::Fixed(lambda));
        if !(0.0..=strategy.gamma_cap).contains(&lambda) {
            return Err(BettingError::InvalidFixedLambda {
                lambda,
                gamma: strategy.gamma_cap,
            });
        }
        Ok(strategy)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self, BettingError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(BettingError::InvalidGamma(gamma));
        }
        if let StrategyKind::Fixed(l) = self.kind {
            if l > gamma {
                return Err(BettingError::InvalidFixedLambda { lambda: l, gamma });
            }
        }
        self.gamma_cap = gamma;
        Ok(self)
    }

    pub fn with_window(mut self, window: Option<usize>) -> Self {
        self.window = window;
        self
    }

    pub fn with_warmup(mut self, warmup: usize) -> Self {
        self.warmup = warmup;
        self
    }

    /// Whether the rule maintains distinct GREE/GREL wealth legs.
    pub fn is_mixture(&self) -> bool {
        matches!(self.kind, StrategyKind::Grem | StrategyKind::TaylorGrem)
    }

    /// Computes the stake for day `t` (1-based) given the state through day
    /// `t - 1` and the forecasts reported for day `t`.
    pub fn decide(
        &self,
        state: &BettingState,
        t: usize,
        estat: &EStatistic,
        r: f64,
        z: Option<f64>,
    ) -> Result<LambdaDecision, BettingError> {
        if t <= self.warmup {
            return Ok(LambdaDecision::zero());
        }
        let g = self.gamma_cap;
        let w = self.window;
        let decision = match &self.kind {
            StrategyKind::Fixed(l) => LambdaDecision::uniform(*l),
            StrategyKind::Gro(model) => {
                LambdaDecision::uniform(gro_lambda(&model.law(t), estat, r, z, g)?)
            }
            StrategyKind::Gree => LambdaDecision::uniform(gree_lambda(state, g, w)),
            StrategyKind::Grel => {
                LambdaDecision::uniform(grel_lambda(state, estat, r, z, g, w)?)
            }
            StrategyKind::TaylorGree => {
                LambdaDecision::uniform(taylor_lambda_generic(state.window_e(w), g))
            }
            StrategyKind::TaylorGrel => {
                LambdaDecision::uniform(self.taylor_grel_leg(state, estat, r, z)?)
            }
            StrategyKind::Grem => {
                let lg = gree_lambda(state, g, w);
                let ll = grel_lambda(state, estat, r, z, g, w)?;
                LambdaDecision {
                    lambda: grem_combine(state.gree_log_wealth, state.grel_log_wealth, lg, ll),
                    gree: lg,
                    grel: ll,
                }
            }
            StrategyKind::TaylorGrem => {
                let lg = taylor_lambda_generic(state.window_e(w), g);
                let ll = self.taylor_grel_leg(state, estat, r, z)?;
                LambdaDecision {
                    lambda: grem_combine(state.gree_log_wealth, state.grel_log_wealth, lg, ll),
                    gree: lg,
                    grel: ll,
                }
            }
        };
        Ok(decision)
    }

    fn taylor_grel_leg(
        &self,
        state: &BettingState,
        estat: &EStatistic,
        r: f64,
        z: Option<f64>,
    ) -> Result<f64, BettingError> {
        let losses = state.window_loss(self.window);
        let g = self.gamma_cap;
        let lambda = match estat.family() {
            Family::Quantile { level } => taylor_var_grel(losses, r, level, g),
            Family::EsPair { level } => {
                let z = z.ok_or(EStatError::MissingAuxiliary)?;
                taylor_es_grel(losses, r, z, level, g)
            }
            _ => {
                let evalues: Vec<f64> = losses
                    .iter()
                    .map(|l| estat.evaluate(*l, r, z))
                    .collect::<Result<_, _>>()?;
                taylor_lambda_generic(&evalues, g)
            }
        };
        Ok(lambda)
    }
}

/// The stake chosen for a day. For mixture rules the two leg stakes are kept
/// for reporting and for the leg wealth updates; for single-leg rules both
/// legs carry the same value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaDecision {
    pub lambda: f64,
    pub gree: f64,
    pub grel: f64,
}

impl LambdaDecision {
    pub fn zero() -> Self {
        LambdaDecision {
            lambda: 0.0,
            gree: 0.0,
            grel: 0.0,
        }
    }

    fn uniform(lambda: f64) -> Self {
        LambdaDecision {
            lambda,
            gree: lambda,
            grel: lambda,
        }
    }
}

/// Log of the one-day growth factor `1 - lambda + lambda * e`.
pub fn log_growth_factor(e_value: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else if e_value.is_infinite() {
        f64::INFINITY
    } else {
        (1.0 - lambda + lambda * e_value).ln()
    }
}

/// Accumulated history of one backtest run: realized e-values, losses, and
/// the two leg wealths used by the mixture rules. Owned by a single run.
#[derive(Debug, Clone)]
pub struct BettingState {
    history_e: Vec<f64>,
    history_loss: Vec<f64>,
    pub gree_log_wealth: f64,
    pub grel_log_wealth: f64,
    pub last_gree_lambda: f64,
    pub last_grel_lambda: f64,
}

impl Default for BettingState {
    fn default() -> Self {
        Self::new()
    }
}

impl BettingState {
    pub fn new() -> Self {
        BettingState {
            history_e: Vec::new(),
            history_loss: Vec::new(),
            gree_log_wealth: 0.0,
            grel_log_wealth: 0.0,
            last_gree_lambda: 0.0,
            last_grel_lambda: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.history_e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history_e.is_empty()
    }

    /// Rolling window of past realized e-values: a window of length `W`
    /// exposes the most recent `W` days.
    pub fn window_e(&self, window: Option<usize>) -> &[f64] {
        slice_window(&self.history_e, window)
    }

    /// Rolling window of past losses.
    pub fn window_loss(&self, window: Option<usize>) -> &[f64] {
        slice_window(&self.history_loss, window)
    }

    /// Records one realized day and rolls the leg wealths forward.
    pub fn record(&mut self, loss: f64, e_value: f64, decision: &LambdaDecision) {
        self.history_loss.push(loss);
        self.history_e.push(e_value);
        if !self.gree_log_wealth.is_infinite() {
            self.gree_log_wealth += log_growth_factor(e_value, decision.gree);
        }
        if !self.grel_log_wealth.is_infinite() {
            self.grel_log_wealth += log_growth_factor(e_value, decision.grel);
        }
        self.last_gree_lambda = decision.gree;
        self.last_grel_lambda = decision.grel;
    }
}

fn slice_window(data: &[f64], window: Option<usize>) -> &[f64] {
    match window {
        Some(w) if data.len() > w => &data[data.len() - w..],
        _ => data,
    }
}
