//! Plain key-value scenario configuration files.
//!
//! Format: one `key = value` pair per line, `#` starts a comment. Unknown
//! keys are rejected with a message naming the key.

use std::collections::BTreeMap;

use ebacktest::timeseries::ArGarchParams;
use ebacktest::{Adjustment, Dgp, Forecaster, InnovationSpec, ScenarioConfig};

use crate::CliError;

const KNOWN_KEYS: &[&str] = &[
    "dgp",
    "level",
    "burn_in",
    "n_presample",
    "n_test",
    "forecaster",
    "fit_window",
    "refit_interval",
    "adjustment",
    "switch_day",
    "change_day",
    "c",
    "psi",
    "alpha0",
    "alpha1",
    "beta",
    "innovation",
    "nu",
    "skewness",
    "seed",
];

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn parse_scenario_config(text: &str) -> Result<(ScenarioConfig, Option<u64>), CliError> {
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(config_err(format!("unknown config key `{key}`")));
        }
        kv.insert(key, value.trim().to_string());
    }

    let get_f64 = |kv: &BTreeMap<String, String>, key: &str| -> Result<Option<f64>, CliError> {
        kv.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| config_err(format!("key `{key}`: `{v}` is not a number")))
            })
            .transpose()
    };
    let get_usize = |kv: &BTreeMap<String, String>, key: &str| -> Result<Option<usize>, CliError> {
        kv.get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| config_err(format!("key `{key}`: `{v}` is not a count")))
            })
            .transpose()
    };

    let innovation = match kv.get("innovation").map(String::as_str) {
        None => None,
        Some("normal") => Some(InnovationSpec::normal()),
        Some("t") | Some("student_t") => {
            let nu = get_f64(&kv, "nu")?.ok_or_else(|| config_err("key `nu`: required for innovation = t"))?;
            Some(
                InnovationSpec::student_t(nu)
                    .map_err(|e| config_err(format!("key `nu`: {e}")))?,
            )
        }
        Some("skewed_t") => {
            let nu = get_f64(&kv, "nu")?
                .ok_or_else(|| config_err("key `nu`: required for innovation = skewed_t"))?;
            let skew = get_f64(&kv, "skewness")?
                .ok_or_else(|| config_err("key `skewness`: required for innovation = skewed_t"))?;
            Some(
                InnovationSpec::skewed_t(nu, skew)
                    .map_err(|e| config_err(format!("key `nu`/`skewness`: {e}")))?,
            )
        }
        Some(v) => return Err(config_err(format!("key `innovation`: unknown family `{v}`"))),
    };

    let dgp = match kv.get("dgp").map(String::as_str).unwrap_or("stationary") {
        "stationary" => Dgp::stationary(),
        "structural" => {
            let change_day = get_usize(&kv, "change_day")?.unwrap_or(100);
            Dgp::structural(change_day)
        }
        "custom" => {
            let need = |key: &str| -> Result<f64, CliError> {
                get_f64(&kv, key)?
                    .ok_or_else(|| config_err(format!("key `{key}`: required for dgp = custom")))
            };
            let params = ArGarchParams::new(
                need("c")?,
                need("psi")?,
                need("alpha0")?,
                need("alpha1")?,
                need("beta")?,
            );
            let innovation = innovation
                .ok_or_else(|| config_err("key `innovation`: required for dgp = custom"))?;
            Dgp::custom(params, innovation)
        }
        v => return Err(config_err(format!("key `dgp`: unknown process `{v}`"))),
    };

    let forecaster = match kv.get("forecaster").map(String::as_str) {
        None => {
            if matches!(dgp, Dgp::StructuralGarch { .. }) {
                Forecaster::FilteredEmpirical
            } else {
                Forecaster::TrueModel
            }
        }
        Some("fit_normal") => Forecaster::FitNormal,
        Some("fit_t") => Forecaster::FitT,
        Some("fit_skewed_t") => Forecaster::FitSkewedT,
        Some("true_model") => Forecaster::TrueModel,
        Some("empirical") => Forecaster::Empirical,
        Some("filtered_empirical") => Forecaster::FilteredEmpirical,
        Some(v) => {
            return Err(config_err(format!(
                "key `forecaster`: unknown forecaster `{v}`"
            )))
        }
    };

    let adjustment = match kv.get("adjustment").map(String::as_str).unwrap_or("exact") {
        "exact" => Adjustment::Exact,
        "minus10_es" => Adjustment::MinusTenPctEs,
        "minus10_both" => Adjustment::MinusTenPctBoth,
        "plus10_es" => Adjustment::PlusTenPctEs,
        "plus10_both" => Adjustment::PlusTenPctBoth,
        "minus10_var" => Adjustment::MinusTenPctVar,
        "plus10_var" => Adjustment::PlusTenPctVar,
        "gamed" => {
            let switch_day = get_usize(&kv, "switch_day")?
                .ok_or_else(|| config_err("key `switch_day`: required for adjustment = gamed"))?;
            Adjustment::Gamed { switch_day }
        }
        v => {
            return Err(config_err(format!(
                "key `adjustment`: unknown adjustment `{v}`"
            )))
        }
    };

    let level = get_f64(&kv, "level")?.unwrap_or(0.975);
    let mut scenario = ScenarioConfig::new(dgp, forecaster, level);
    if let Some(v) = get_usize(&kv, "burn_in")? {
        scenario.burn_in = v;
    }
    if let Some(v) = get_usize(&kv, "n_presample")? {
        scenario.n_presample = v;
    }
    if let Some(v) = get_usize(&kv, "n_test")? {
        scenario.n_test = v;
    }
    if let Some(v) = get_usize(&kv, "fit_window")? {
        scenario.fit_window = v;
    }
    if let Some(v) = get_usize(&kv, "refit_interval")? {
        scenario.refit_interval = v;
    }
    scenario.adjustment = adjustment;

    scenario
        .validate()
        .map_err(|e| config_err(e.to_string()))?;

    let seed = kv
        .get("seed")
        .map(|v| {
            v.parse::<u64>()
                .map_err(|_| config_err(format!("key `seed`: `{v}` is not an integer")))
        })
        .transpose()?;

    Ok((scenario, seed))
}
