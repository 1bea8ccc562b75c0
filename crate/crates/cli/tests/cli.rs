//! End-to-end checks of the `mwg-kernels` binary: artifact layout,
//! determinism, exit-code contract, and schema strictness.

use std::path::Path;
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mwg-kernels"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = binary().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success for {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("missing artifact {name}: {e}"))
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(dir, "summary.json")).expect("summary parses")
}

/// A small two-population epidemic that runs fast in tests.
fn tiny_sir_config(events_csv: Option<&Path>) -> serde_json::Value {
    serde_json::json!({
        "sir": {
            "model": {
                "num_pops": 2,
                "population": [30, 30],
                "connectivity": [[0.0, 0.4], [0.4, 0.0]],
                "gamma": 0.3,
                "num_times": 8,
                "delta_t": 1.0,
                "init_window": 8,
            },
            "params": {"beta1": 0.9, "beta2": 0.3},
            "initial_state": [[27, 3, 0], [30, 0, 0]],
            "events_csv": events_csv,
        }
    })
}

fn write_config(dir: &Path, value: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec(value).unwrap()).unwrap();
    path
}

#[test]
fn metropolis_demo_trace_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(&[
            "metropolis-demo",
            "--num-samples",
            "500",
            "--seed",
            "7",
            "--output-dir",
            out.to_str().unwrap(),
        ]);
    }
    let trace = read(&a, "trace.csv");
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "iteration,mu_x,mu_y");
    assert_eq!(lines.len(), 501, "header plus one row per sample");
    assert_eq!(trace, read(&b, "trace.csv"), "same config and seed");

    let s = summary(&a);
    assert_eq!(s["seed"], 7);
    assert_eq!(s["experiment"], "metropolis-demo");
    assert!(s["library_version"].is_string());
    assert!(s["wall_time_seconds"].as_f64().unwrap() > 0.0);
    assert_eq!(s["config"]["num_samples"], 500);
    assert!(s["components"]["mu_x"]["ess"].as_f64().unwrap() > 1.0);
    assert!(s["oracle"]["mean"].is_array());
    // The density grid is plot-ready: header plus 101 x 101 rows.
    let grid = read(&a, "density-grid.csv");
    assert_eq!(grid.lines().count(), 1 + 101 * 101);
    assert_eq!(grid.lines().next().unwrap(), "mu_x,mu_y,log_density");
}

#[test]
fn gaussian_mwg_reports_one_rate_per_kernel_and_r_hat_across_chains() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run_ok(&[
        "gaussian-mwg",
        "--num-samples",
        "800",
        "--chains",
        "2",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    let s = summary(&out);
    assert_eq!(s["acceptance_rates"].as_array().unwrap().len(), 2);
    assert_eq!(s["kernel_labels"], serde_json::json!(["mu_x", "mu_y"]));
    let r = s["r_hat"]["mu_x"].as_f64().unwrap();
    assert!(r.is_finite() && r > 0.8 && r < 3.0, "r_hat {r}");
    assert!(out.join("trace-chain-1.csv").exists());
    assert!(!out.join("trace-chain-2.csv").exists());
}

#[test]
fn unknown_config_fields_and_flags_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &serde_json::json!({"sedd": 3}));
    let out = binary()
        .args(["gaussian-mwg", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));

    let out = binary().args(["gaussian-mwg", "--bogus"]).output().unwrap();
    assert_eq!(exit_code(&out), 1);

    let out = binary().args(["--help"]).output().unwrap();
    assert_eq!(exit_code(&out), 0);
}

#[test]
fn experiment_tag_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &serde_json::json!({"experiment": "sir-fit"}));
    let out = binary()
        .args(["gaussian-mwg", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tagged"));
}

#[test]
fn sir_simulate_trajectory_conserves_population() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &tiny_sir_config(None));
    run_ok(&[
        "sir-simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    let trajectory = read(&out, "trajectory.csv");
    let mut rows = 0;
    for line in trajectory.lines().skip(1) {
        let f: Vec<i64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(f[2] + f[3] + f[4], 30, "every row sums to N");
        rows += 1;
    }
    assert_eq!(rows, 9 * 2, "one row per population per block boundary");
    let events = read(&out, "events.csv");
    assert_eq!(events.lines().next().unwrap(), "block,population,infections,removals");
    assert_eq!(events.lines().count(), 1 + 8 * 2);
}

#[test]
fn sir_fit_recovers_artifacts_from_simulated_events_file() {
    let dir = tempfile::tempdir().unwrap();
    let sim_out = dir.path().join("sim");
    let sim_cfg = write_config(dir.path(), &tiny_sir_config(None));
    run_ok(&[
        "sir-simulate",
        "--config",
        sim_cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--output-dir",
        sim_out.to_str().unwrap(),
    ]);

    let fit_out = dir.path().join("fit");
    let fit_cfg_path = dir.path().join("fit-config.json");
    std::fs::write(
        &fit_cfg_path,
        serde_json::to_vec(&tiny_sir_config(Some(&sim_out.join("events.csv")))).unwrap(),
    )
    .unwrap();
    run_ok(&[
        "sir-fit",
        "--config",
        fit_cfg_path.to_str().unwrap(),
        "--num-samples",
        "400",
        "--seed",
        "5",
        "--output-dir",
        fit_out.to_str().unwrap(),
    ]);

    let beta_trace = read(&fit_out, "beta-trace.csv");
    let lines: Vec<&str> = beta_trace.lines().collect();
    assert_eq!(lines[0], "iteration,beta1,beta2");
    assert_eq!(lines.len(), 401);
    // Rates are reported on the natural scale.
    for line in &lines[1..] {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!(f[1] > 0.0 && f[2] > 0.0);
    }

    let posterior = read(&fit_out, "event-posterior.csv");
    assert_eq!(
        posterior.lines().next().unwrap(),
        "block,population,mean_infections,observed_removals"
    );
    assert_eq!(posterior.lines().count(), 1 + 8 * 2);

    let s = summary(&fit_out);
    assert_eq!(s["data_source"], "file");
    assert!(s.get("truth").is_none(), "no truth when data come from a file");
    assert!(s["betas"]["beta1"]["ci95"].is_array());
    let rates = s["acceptance_rates"].as_object().unwrap();
    assert_eq!(rates.len(), 3);
    for key in ["parameters", "move_events", "initial_conditions"] {
        let r = rates[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&r), "{key} rate {r}");
    }
}

#[test]
fn sir_fit_names_the_violation_for_infeasible_events() {
    let dir = tempfile::tempdir().unwrap();
    // Population 1 starts with zero infected, so a removal in block 0 is
    // impossible no matter where infections are placed.
    let mut rows = vec!["block,population,infections,removals".to_string()];
    for t in 0..8 {
        for i in 0..2 {
            let ir = i64::from(t == 0 && i == 1) * 2;
            rows.push(format!("{t},{i},0,{ir}"));
        }
    }
    let events_path = dir.path().join("events.csv");
    std::fs::write(&events_path, rows.join("\n") + "\n").unwrap();
    let cfg = write_config(dir.path(), &tiny_sir_config(Some(&events_path)));
    let out = binary()
        .args([
            "sir-fit",
            "--config",
            cfg.to_str().unwrap(),
            "--output-dir",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("population 1") && stderr.contains("block 0"),
        "violation must be named: {stderr}"
    );
    assert!(
        !dir.path().join("out").join("summary.json").exists(),
        "no artifacts on failure"
    );
}

#[test]
fn sir_fit_simulates_its_own_data_when_no_events_are_supplied() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &tiny_sir_config(None));
    run_ok(&[
        "sir-fit",
        "--config",
        cfg.to_str().unwrap(),
        "--num-samples",
        "300",
        "--seed",
        "3",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    let s = summary(&out);
    assert_eq!(s["data_source"], "simulated");
    assert_eq!(s["truth"]["beta1"], 0.9);
    assert!(s["ci_contains_truth"]["beta1"].is_boolean());
}
