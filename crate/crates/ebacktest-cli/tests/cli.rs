//! End-to-end checks of the command-line surface: config handling, CSV
//! round trips, report shape, and the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ebacktest"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ebacktest-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn simulate_minimal_config_row_count_and_determinism() {
    let config = tmp("minimal.conf");
    write(&config, "# defaults only\n");
    let out_a = tmp("sim_a.csv");
    let out_b = tmp("sim_b.csv");

    let status = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert!(status.status.success(), "{status:?}");
    let text = fs::read_to_string(&out_a).unwrap();
    assert_eq!(text.lines().count(), 501, "header plus 500 rows");
    assert!(text.starts_with("t,loss,var_forecast,es_forecast,true_mu,true_sigma"));

    let status = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert!(status.status.success());
    assert_eq!(
        fs::read(&out_a).unwrap(),
        fs::read(&out_b).unwrap(),
        "same seed must give identical bytes"
    );
}

#[test]
fn simulate_structural_truth_columns_replay() {
    let config = tmp("structural.conf");
    write(
        &config,
        "dgp = structural\nchange_day = 100\nlevel = 0.95\nn_presample = 250\nn_test = 250\n",
    );
    let out = tmp("structural.csv");
    let status = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert!(status.status.success(), "{status:?}");

    let mut losses = Vec::new();
    let mut sigmas = Vec::new();
    for line in fs::read_to_string(&out).unwrap().lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        losses.push(cells[1].parse::<f64>().unwrap());
        sigmas.push(cells[5].parse::<f64>().unwrap());
    }
    assert_eq!(losses.len(), 250);
    // Replay the variance recursion: beta switches from 0.7 to 0.95 at row
    // 101 of the truth columns.
    let (omega, alpha) = (1e-5, 0.04);
    for d in 1..250 {
        let beta = if d + 1 > 100 { 0.95 } else { 0.7 };
        let expect = omega + alpha * losses[d - 1].powi(2) + beta * sigmas[d - 1].powi(2);
        assert!(
            (expect - sigmas[d].powi(2)).abs() < 1e-12,
            "recursion mismatch at row {}",
            d + 1
        );
    }
}

#[test]
fn simulate_output_round_trips_into_backtest() {
    let config = tmp("roundtrip.conf");
    write(&config, "n_test = 120\nn_presample = 60\nfit_window = 60\nburn_in = 50\n");
    let csv = tmp("roundtrip.csv");
    assert!(run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--seed",
        "3",
    ])
    .status
    .success());

    let report = tmp("roundtrip.json");
    let trajectory = tmp("roundtrip_traj.csv");
    let out = run(&[
        "backtest",
        "--input",
        csv.to_str().unwrap(),
        "--measure",
        "es",
        "--level",
        "0.975",
        "--method",
        "grem",
        "--report",
        report.to_str().unwrap(),
        "--trajectory",
        trajectory.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["rows"], 120);
    assert!(json["final_log_e"].is_number());
    let traj = fs::read_to_string(&trajectory).unwrap();
    assert!(traj.starts_with("t,lambda,e_value,log_wealth,sup_log_wealth"));
    assert_eq!(traj.lines().count(), 121);
}

#[test]
fn backtest_fixed_stake_crossing_days() {
    // Engineered stream with a constant e-value of 2 at level 0.95.
    let csv = tmp("fixed.csv");
    let mut text = String::from("t,loss,var_forecast,es_forecast\n");
    for t in 1..=10 {
        text.push_str(&format!("{t},1.1,1.0,2.0\n"));
    }
    write(&csv, &text);
    let out = run(&[
        "backtest",
        "--input",
        csv.to_str().unwrap(),
        "--measure",
        "es",
        "--level",
        "0.95",
        "--method",
        "fixed",
        "--lambda",
        "0.5",
    ]);
    assert!(out.status.success());
    let json: serde_json::Value =
        serde_json::from_slice(&out.stdout).unwrap();
    let days: Vec<i64> = json["crossings"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["day"].as_i64().unwrap())
        .collect();
    assert_eq!(days, vec![2, 4, 6]);
}

#[test]
fn backtest_ultra_conservative_reports_never_detect() {
    let csv = tmp("conservative.csv");
    let mut text = String::from("t,loss,var_forecast,es_forecast\n");
    for t in 1..=50 {
        text.push_str(&format!("{t},{},inf,inf\n", (t % 7) as f64 - 2.0));
    }
    write(&csv, &text);
    for measure in ["var", "es"] {
        let out = run(&[
            "backtest",
            "--input",
            csv.to_str().unwrap(),
            "--measure",
            measure,
            "--method",
            "grem",
        ]);
        assert!(out.status.success(), "{out:?}");
        let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(json["final_log_e"].as_f64().unwrap() <= 0.0);
        for c in json["crossings"].as_array().unwrap() {
            assert!(c["day"].is_null(), "unexpected detection {c:?}");
        }
    }
}

#[test]
fn backtest_gro_with_finite_alternative() {
    let csv = tmp("gro.csv");
    let mut text = String::from("t,loss,var_forecast,es_forecast\n");
    for t in 1..=30 {
        let loss = if t % 3 == 0 { 2.4 } else { 0.2 };
        text.push_str(&format!("{t},{loss},1.0,1.5\n"));
    }
    write(&csv, &text);
    let out = run(&[
        "backtest",
        "--input",
        csv.to_str().unwrap(),
        "--measure",
        "es",
        "--method",
        "gro",
        "--alternative",
        "0.2:0.6,2.4:0.4",
    ]);
    assert!(out.status.success(), "{out:?}");
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    // Config error: unknown key.
    let bad_conf = tmp("bad.conf");
    write(&bad_conf, "no_such_key = 1\n");
    let out = run(&[
        "simulate",
        "--config",
        bad_conf.to_str().unwrap(),
        "--out",
        tmp("unwritten.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    // Config error: fixed without lambda.
    let small = tmp("small.csv");
    write(&small, "t,loss,var_forecast\n1,0.5,1.0\n");
    let out = run(&[
        "backtest",
        "--input",
        small.to_str().unwrap(),
        "--measure",
        "var",
        "--method",
        "fixed",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Schema error: es backtest without an es column.
    let out = run(&[
        "backtest",
        "--input",
        small.to_str().unwrap(),
        "--measure",
        "es",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("es_forecast"));

    // Data error: NaN loss names the row.
    let nan_csv = tmp("nan.csv");
    write(&nan_csv, "t,loss,var_forecast\n1,0.5,1.0\n2,NaN,1.0\n");
    let out = run(&[
        "backtest",
        "--input",
        nan_csv.to_str().unwrap(),
        "--measure",
        "var",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    // Data error: non-increasing index.
    let unordered = tmp("unordered.csv");
    write(&unordered, "t,loss,var_forecast\n2,0.5,1.0\n1,0.5,1.0\n");
    let out = run(&[
        "backtest",
        "--input",
        unordered.to_str().unwrap(),
        "--measure",
        "var",
    ]);
    assert_eq!(out.status.code(), Some(4));

    // Unknown suite lists the available ones.
    let out = run(&["experiment", "frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stationary-es"));
}

#[test]
fn backtest_accepts_iso_dates_as_index() {
    let csv = tmp("dates.csv");
    write(
        &csv,
        "date,loss,var_forecast\n2021-01-04,0.5,1.0\n2021-01-05,1.4,1.0\n2021-01-06,0.2,1.0\n",
    );
    let out = run(&[
        "backtest",
        "--input",
        csv.to_str().unwrap(),
        "--measure",
        "var",
        "--level",
        "0.9",
    ]);
    assert!(out.status.success(), "{out:?}");
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["rows"], 3);
}

#[test]
fn experiment_suites_smoke() {
    let dir = tmp("suites");
    fs::create_dir_all(&dir).unwrap();
    let out = run(&[
        "experiment",
        "stationary-es",
        "--reps",
        "1",
        "--seed",
        "2",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let table = fs::read_to_string(dir.join("stationary-es.csv")).unwrap();
    // 4 forecasters x 5 adjustment rows x 3 thresholds plus header.
    assert_eq!(table.lines().count(), 61);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("stationary-es.json")).unwrap())
            .unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["rows"].as_array().unwrap().len(), 20);

    let out = run(&[
        "experiment",
        "structural",
        "--reps",
        "2",
        "--seed",
        "2",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    assert!(dir.join("structural-es.csv").exists());
    assert!(dir.join("structural-var.csv").exists());

    let out = run(&[
        "experiment",
        "example51",
        "--reps",
        "2",
        "--seed",
        "2",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let traj = fs::read_to_string(dir.join("example51-a.csv")).unwrap();
    assert!(traj.starts_with("t,gro,gree,grel,grem"));
    assert_eq!(traj.lines().count(), 1011);

    let out = run(&[
        "experiment",
        "type1",
        "--reps",
        "2",
        "--seed",
        "2",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let table = fs::read_to_string(dir.join("type1.csv")).unwrap();
    // 4 methods x 2 sample sizes x 3 thresholds plus header.
    assert_eq!(table.lines().count(), 25);
}
