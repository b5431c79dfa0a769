//! The test supermartingale accumulator.
//!
//! Wealth evolves as `M_t = (1 - lambda_t + lambda_t X_t) M_{t-1}` with
//! `M_0 = 1`, where `X_t` is the day's realized e-value and `lambda_t` the
//! predictable bet. By Ville's inequality the probability that the running
//! supremum ever reaches `1/alpha` is at most `alpha` under the null, so
//! threshold crossings are anytime-valid detections: the tester may look
//! every day and stop whenever a threshold is crossed.
//!
//! All accumulation is in log space so multi-thousand-day runs neither
//! overflow nor underflow. A wealth of zero (log `-inf`) is absorbing; so is
//! `+inf`, which occurs when an infinite e-value meets a positive bet and
//! makes every threshold cross at that day.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EProcessError {
    #[error("betting fraction must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("thresholds must be strictly increasing and greater than 1")]
    BadThresholds,
    #[error("e-values must be nonnegative, got {0}")]
    NegativeEValue(f64),
    #[error("state does not record a wealth history")]
    HistoryDisabled,
    #[error("horizon {0} exceeds the number of observed days {1}")]
    HorizonBeyondRun(usize, usize),
}

/// Detection thresholds for the running supremum, e.g. `{2, 5, 10}`, plus an
/// optional hard-stop level `1/alpha` after which no further wealth is
/// accumulated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionThresholds {
    levels: Vec<f64>,
    hard_stop: Option<f64>,
}

impl DetectionThresholds {
    pub fn new(levels: Vec<f64>) -> Result<Self, EProcessError> {
        if levels.is_empty() || levels[0] <= 1.0 {
            return Err(EProcessError::BadThresholds);
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EProcessError::BadThresholds);
        }
        Ok(DetectionThresholds {
            levels,
            hard_stop: None,
        })
    }

    /// The default `{2, 5, 10}` ladder.
    pub fn standard() -> Self {
        DetectionThresholds::new(vec![2.0, 5.0, 10.0]).unwrap()
    }

    pub fn with_hard_stop(mut self, level: f64) -> Result<Self, EProcessError> {
        if level <= 1.0 {
            return Err(EProcessError::BadThresholds);
        }
        self.hard_stop = Some(level);
        Ok(self)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn hard_stop(&self) -> Option<f64> {
        self.hard_stop
    }
}

/// First crossing of a threshold: the day (1-based) and the log-wealth
/// reached on that day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub day: usize,
    pub log_wealth: f64,
}

/// Running state of one e-process.
#[derive(Debug, Clone)]
pub struct EProcessState {
    t: usize,
    log_wealth: f64,
    running_sup_log: f64,
    thresholds: DetectionThresholds,
    crossings: Vec<Option<Crossing>>,
    stopped: bool,
    history: Option<Vec<f64>>,
}

impl EProcessState {
    pub fn new(thresholds: DetectionThresholds) -> Self {
        let n = thresholds.levels.len();
        EProcessState {
            t: 0,
            log_wealth: 0.0,
            running_sup_log: 0.0,
            thresholds,
            crossings: vec![None; n],
            stopped: false,
            history: None,
        }
    }

    /// Records the log-wealth path, enabling [`EProcessState::stopped_value`].
    pub fn with_history(mut self) -> Self {
        self.history = Some(Vec::new());
        self
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn log_wealth(&self) -> f64 {
        self.log_wealth
    }

    pub fn running_sup_log(&self) -> f64 {
        self.running_sup_log
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn thresholds(&self) -> &DetectionThresholds {
        &self.thresholds
    }

    /// One day's wealth update with e-value `e_value` and bet `lambda`.
    ///
    /// After a hard stop the state no longer accumulates; without a hard stop
    /// the process keeps running past crossings so full trajectories remain
    /// reportable.
    pub fn update(&mut self, e_value: f64, lambda: f64) -> Result<(), EProcessError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(EProcessError::LambdaOutOfRange(lambda));
        }
        if e_value < 0.0 || e_value.is_nan() {
            return Err(EProcessError::NegativeEValue(e_value));
        }
        let step = if lambda == 0.0 {
            0.0
        } else if e_value.is_infinite() {
            f64::INFINITY
        } else {
            (1.0 - lambda + lambda * e_value).ln()
        };
        let next = if self.log_wealth.is_infinite() {
            // -inf (ruin) and +inf are absorbing.
            self.log_wealth
        } else {
            self.log_wealth + step
        };
        self.advance_to(next);
        Ok(())
    }

    /// Advances one day to an externally computed log-wealth. Used by wealth
    /// mixtures whose value is defined directly rather than via a factor.
    pub fn advance_to(&mut self, log_wealth: f64) {
        if self.stopped {
            return;
        }
        self.t += 1;
        self.log_wealth = log_wealth;
        if log_wealth > self.running_sup_log {
            self.running_sup_log = log_wealth;
        }
        if let Some(h) = self.history.as_mut() {
            h.push(log_wealth);
        }
        for (slot, level) in self.crossings.iter_mut().zip(&self.thresholds.levels) {
            if slot.is_none() && self.running_sup_log >= level.ln() {
                *slot = Some(Crossing {
                    day: self.t,
                    log_wealth,
                });
            }
        }
        if let Some(hs) = self.thresholds.hard_stop {
            if self.running_sup_log >= hs.ln() {
                self.stopped = true;
            }
        }
    }

    /// Per-threshold first crossings and the final log e-value.
    pub fn detect(&self) -> DetectionReport {
        DetectionReport {
            thresholds: self.thresholds.levels.clone(),
            crossings: self.crossings.clone(),
            final_log_wealth: self.log_wealth,
            sup_log_wealth: self.running_sup_log,
            days: self.t,
        }
    }

    /// Wealth at the stopping time `min(horizon, first crossing of 1/alpha)`.
    /// Requires a recorded history.
    pub fn stopped_value(&self, horizon: usize, alpha: f64) -> Result<f64, EProcessError> {
        let history = self
            .history
            .as_ref()
            .ok_or(EProcessError::HistoryDisabled)?;
        if horizon > history.len() {
            return Err(EProcessError::HorizonBeyondRun(horizon, history.len()));
        }
        let bar = (1.0 / alpha).ln();
        let mut sup = f64::NEG_INFINITY;
        for (i, lw) in history.iter().take(horizon).enumerate() {
            sup = sup.max(*lw);
            if sup >= bar {
                return Ok(history[i].exp());
            }
        }
        if horizon == 0 {
            return Ok(1.0);
        }
        Ok(history[horizon - 1].exp())
    }
}

/// Immutable detection snapshot for one run.
#[derive(Debug, Clone, Serialize)]
pub struct DetectionReport {
    pub thresholds: Vec<f64>,
    pub crossings: Vec<Option<Crossing>>,
    pub final_log_wealth: f64,
    pub sup_log_wealth: f64,
    pub days: usize,
}

impl DetectionReport {
    /// First crossing day for a threshold, if that threshold is tracked and
    /// was reached.
    pub fn crossing_day(&self, threshold: f64) -> Option<usize> {
        self.thresholds
            .iter()
            .position(|t| *t == threshold)
            .and_then(|i| self.crossings[i].map(|c| c.day))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn standard_state() -> EProcessState {
        EProcessState::new(DetectionThresholds::standard())
    }

    #[test]
    fn thresholds_must_increase() {
        assert!(DetectionThresholds::new(vec![2.0, 5.0, 5.0]).is_err());
        assert!(DetectionThresholds::new(vec![1.0, 2.0]).is_err());
        assert!(DetectionThresholds::new(vec![]).is_err());
        assert!(DetectionThresholds::new(vec![2.0]).is_ok());
    }

    #[test]
    fn zero_lambda_never_moves_wealth() {
        let mut st = standard_state();
        for e in [0.0, 1.0, 5.0, f64::INFINITY] {
            st.update(e, 0.0).unwrap();
        }
        assert_eq!(st.log_wealth(), 0.0);
        assert_eq!(st.running_sup_log(), 0.0);
        let rep = st.detect();
        assert!(rep.crossings.iter().all(Option::is_none));
        assert_eq!(rep.final_log_wealth, 0.0);
    }

    #[test]
    fn constant_growth_crossing_days() {
        // e = 2, lambda = 0.5 gives M_t = 1.5^t: crossings of (2, 5, 10) at
        // days (2, 4, 6).
        let mut st = standard_state();
        for _ in 0..8 {
            st.update(2.0, 0.5).unwrap();
        }
        let rep = st.detect();
        assert_eq!(rep.crossing_day(2.0), Some(2));
        assert_eq!(rep.crossing_day(5.0), Some(4));
        assert_eq!(rep.crossing_day(10.0), Some(6));
        assert_abs_diff_eq!(rep.final_log_wealth, 8.0 * 1.5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn infinite_evalue_crosses_everything() {
        let mut st = standard_state();
        st.update(1.0, 0.2).unwrap();
        st.update(f64::INFINITY, 0.25).unwrap();
        let rep = st.detect();
        assert_eq!(rep.final_log_wealth, f64::INFINITY);
        for c in &rep.crossings {
            assert_eq!(c.unwrap().day, 2);
        }
        // +inf is absorbing.
        st.update(0.0, 0.5).unwrap();
        assert_eq!(st.log_wealth(), f64::INFINITY);
    }

    #[test]
    fn ruin_is_absorbing() {
        let mut st = standard_state();
        st.update(0.0, 1.0).unwrap();
        assert_eq!(st.log_wealth(), f64::NEG_INFINITY);
        st.update(10.0, 0.5).unwrap();
        assert_eq!(st.log_wealth(), f64::NEG_INFINITY);
        st.update(f64::INFINITY, 0.5).unwrap();
        assert_eq!(st.log_wealth(), f64::NEG_INFINITY);
    }

    #[test]
    fn lambda_contract() {
        let mut st = standard_state();
        assert!(st.update(1.0, -0.01).is_err());
        assert!(st.update(1.0, 1.01).is_err());
        assert!(st.update(-1.0, 0.5).is_err());
    }

    #[test]
    fn sup_is_nondecreasing_and_crossings_monotone() {
        let mut st = standard_state();
        let es = [4.0, 0.2, 6.0, 0.1, 9.0, 0.5, 8.0, 3.0];
        let mut last_sup = 0.0;
        for e in es {
            st.update(e, 0.4).unwrap();
            assert!(st.running_sup_log() >= last_sup);
            last_sup = st.running_sup_log();
        }
        let rep = st.detect();
        let mut prev = 0usize;
        for c in rep.crossings.iter().flatten() {
            assert!(c.day >= prev);
            prev = c.day;
        }
    }

    #[test]
    fn hard_stop_freezes_state() {
        let thresholds = DetectionThresholds::new(vec![2.0])
            .unwrap()
            .with_hard_stop(2.0)
            .unwrap();
        let mut st = EProcessState::new(thresholds);
        for _ in 0..10 {
            st.update(2.0, 0.5).unwrap();
        }
        assert!(st.is_stopped());
        // 1.5^2 = 2.25 crossed at day 2; nothing accumulates afterwards.
        assert_eq!(st.t(), 2);
        assert_abs_diff_eq!(st.log_wealth(), 2.0 * 1.5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn stopped_value_rules() {
        let mut st = standard_state().with_history();
        for _ in 0..10 {
            st.update(2.0, 0.5).unwrap();
        }
        // No crossing of 1/alpha = 1000 by T: value is M_T.
        assert_abs_diff_eq!(
            st.stopped_value(10, 0.001).unwrap(),
            1.5f64.powi(10),
            epsilon = 1e-9
        );
        // Crossing of 20 at day 8 (1.5^8 = 25.6): value is M_8 >= 20.
        let v = st.stopped_value(10, 0.05).unwrap();
        assert_abs_diff_eq!(v, 1.5f64.powi(8), epsilon = 1e-9);
        assert!(v >= 20.0);
        // All-zero-lambda run stops at 1.
        let mut idle = standard_state().with_history();
        for _ in 0..5 {
            idle.update(3.0, 0.0).unwrap();
        }
        assert_eq!(idle.stopped_value(5, 0.05).unwrap(), 1.0);
        assert!(standard_state().stopped_value(1, 0.05).is_err());
    }

    #[test]
    fn log_accumulation_matches_exact_rationals() {
        // 30-step integer-friendly stream checked against exact rational
        // arithmetic.
        use num::rational::BigRational;
        use num::{BigInt, FromPrimitive, ToPrimitive};

        let evs = [2.0, 3.0, 0.5, 1.0, 4.0, 0.25, 2.0, 8.0, 1.5, 0.75];
        let lams = [0.5, 0.25, 0.125, 0.5, 0.0625, 0.25, 0.5, 0.03125, 0.25, 0.5];
        let mut st = standard_state();
        let mut exact = BigRational::from_integer(BigInt::from(1));
        for i in 0..30 {
            let e = evs[i % evs.len()];
            let l = lams[(i * 7 + 3) % lams.len()];
            st.update(e, l).unwrap();
            let el = BigRational::from_f64(e).unwrap();
            let ll = BigRational::from_f64(l).unwrap();
            let one = BigRational::from_integer(BigInt::from(1));
            exact *= one.clone() - ll.clone() + ll * el;
        }
        let exact_f = exact.to_f64().unwrap();
        let got = st.log_wealth().exp();
        assert!(
            ((got - exact_f) / exact_f).abs() <= 1e-12,
            "relative error too large: got {got}, exact {exact_f}"
        );
    }
}
