//! Comparative-growth scenarios for the betting rules: three stylized
//! forecast streams under which either the empirical-e or the empirical-loss
//! rule is the better bet, with the oracle rule as benchmark and the mixture
//! tracking the better leg.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::betting::{gro_lambda, log_growth_factor, BettingStrategy, Law};
use crate::distributions::InnovationSpec;
use crate::eprocess::DetectionThresholds;
use crate::estatistics::{BacktestRecord, EStatistic};

use super::{run_backtest, BacktestRun, HarnessError};

const TRAIN_DAYS: usize = 10;
const TEST_DAYS: usize = 1000;
const LEVEL: f64 = 0.95;
/// Under-reported forecasts of the standard normal at level 0.95:
/// about 90% of the true VaR (1.645) and ES (2.063).
const VAR_REPORT: f64 = 1.48;
const ES_REPORT: f64 = 1.86;

/// The three stylized streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthScenario {
    /// Losses and forecasts grow along a shared linear trend; the realized
    /// e-values are iid, which favors the empirical-e rule.
    LinearTrend,
    /// A sinusoidal business cycle shared by losses and forecasts; again iid
    /// e-values.
    SineTrend,
    /// iid losses with forecasts perturbed by a discrete noise term; the
    /// empirical-loss rule exploits the informative current forecast.
    NoisyForecasts,
}

impl GrowthScenario {
    fn scale(&self, t: usize) -> f64 {
        match self {
            GrowthScenario::LinearTrend => {
                1.0 + t as f64 / (TRAIN_DAYS + TEST_DAYS) as f64
            }
            GrowthScenario::SineTrend => 1.0 + (0.01 * t as f64).sin(),
            GrowthScenario::NoisyForecasts => 1.0,
        }
    }
}

/// Final log e-values by method, one entry per replication, plus the mean
/// log trajectories.
#[derive(Debug, Clone)]
pub struct Example51Outcome {
    pub gro_final: Vec<f64>,
    pub gree_final: Vec<f64>,
    pub grel_final: Vec<f64>,
    pub grem_final: Vec<f64>,
    /// Per day `(t, [gro, gree, grel, grem])` mean log e-process.
    pub mean_log_path: Vec<(usize, [f64; 4])>,
}

impl Example51Outcome {
    pub fn mean_final(&self, series: &[f64]) -> f64 {
        series.iter().sum::<f64>() / series.len() as f64
    }

    /// Standard error of the difference in mean final log e-value between
    /// two methods, over paired replications.
    pub fn paired_diff_se(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }
}

struct RepPaths {
    gro: Vec<f64>,
    gree: Vec<f64>,
    grel: Vec<f64>,
    grem: Vec<f64>,
}

/// Runs the scenario over seeded replications; all four methods see the same
/// simulated stream within each replication.
pub fn example51(
    scenario: GrowthScenario,
    n_reps: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<Example51Outcome, HarnessError> {
    let estat = EStatistic::es_pair(LEVEL)?;
    let normal = InnovationSpec::normal()
        .standardized()
        .expect("valid preset");
    let total = TRAIN_DAYS + TEST_DAYS;

    let run_rep = |rep: usize| -> RepPaths {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed + rep as u64);
        let mut records = Vec::with_capacity(total);
        let mut scales = Vec::with_capacity(total);
        for t in 1..=total {
            let scale = scenario.scale(t);
            let z_t: f64 = normal.draw(&mut rng);
            let (loss, var_f, es_f) = match scenario {
                GrowthScenario::NoisyForecasts => {
                    let eps = (rng.gen_range(0..11) as f64 - 5.0) / 10.0;
                    (z_t, 1.64 + eps, 2.06 + eps)
                }
                _ => (scale * z_t, VAR_REPORT * scale, ES_REPORT * scale),
            };
            records.push(BacktestRecord::new(t, loss, es_f, Some(var_f)));
            scales.push(scale);
        }

        let run = BacktestRun {
            records: records.clone(),
            estat,
            strategy: BettingStrategy::grem().with_warmup(TRAIN_DAYS),
            thresholds: DetectionThresholds::standard(),
        };
        let result = run_backtest(&run).expect("synthetic records are well-formed");
        let grem: Vec<f64> = result.trajectory.points.iter().map(|p| p.log_wealth).collect();
        let gree = result.gree_leg_log.expect("mixture run");
        let grel = result.grel_leg_log.expect("mixture run");

        // Oracle rule: bet against the known conditional law of the loss.
        // The solve is cached on the forecast-to-scale ratios, which are
        // invariant along the trend scenarios.
        let mut cache: HashMap<(u64, u64), f64> = HashMap::new();
        let mut log_w = 0.0;
        let mut gro = Vec::with_capacity(total);
        for (i, rec) in records.iter().enumerate() {
            let t = i + 1;
            let lambda = if t <= TRAIN_DAYS {
                0.0
            } else {
                let scale = scales[i];
                let z = rec.z.expect("es records carry VaR");
                let key = ((rec.r / scale).to_bits(), (z / scale).to_bits());
                match cache.get(&key) {
                    Some(l) => *l,
                    None => {
                        let dist = normal.clone();
                        let law =
                            Law::Quantile(Arc::new(move |u| scale * dist.quantile(u).unwrap()));
                        let l = gro_lambda(&law, &estat, rec.r, rec.z, 0.5)
                            .expect("oracle solve on a smooth law");
                        cache.insert(key, l);
                        l
                    }
                }
            };
            let e = estat.evaluate_record(rec).expect("valid record");
            log_w += log_growth_factor(e, lambda);
            gro.push(log_w);
        }

        RepPaths {
            gro,
            gree,
            grel,
            grem,
        }
    };

    let reps: Vec<RepPaths> = super::with_pool(jobs, || {
        (0..n_reps).into_par_iter().map(run_rep).collect()
    });

    let mut mean_log_path = Vec::with_capacity(total);
    for i in 0..total {
        let mut acc = [0.0f64; 4];
        for rep in &reps {
            acc[0] += rep.gro[i];
            acc[1] += rep.gree[i];
            acc[2] += rep.grel[i];
            acc[3] += rep.grem[i];
        }
        for v in acc.iter_mut() {
            *v /= n_reps as f64;
        }
        mean_log_path.push((i + 1, acc));
    }

    Ok(Example51Outcome {
        gro_final: reps.iter().map(|r| *r.gro.last().unwrap()).collect(),
        gree_final: reps.iter().map(|r| *r.gree.last().unwrap()).collect(),
        grel_final: reps.iter().map(|r| *r.grel.last().unwrap()).collect(),
        grem_final: reps.iter().map(|r| *r.grem.last().unwrap()).collect(),
        mean_log_path,
    })
}
