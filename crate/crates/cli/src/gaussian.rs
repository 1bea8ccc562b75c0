//! The two Gaussian mean-estimation experiments.
//!
//! Both sample the posterior of a 2-D Gaussian mean under simulated data
//! and write the same artifact set: the full position trace, a summary
//! with the conjugate closed-form posterior alongside the Monte Carlo
//! estimates, and a log-density grid for external plotting.
//!
//! * `gaussian-mwg` composes two blockwise kernels: a fixed-scale random
//!   walk on `mu_x` and an adaptive random walk on `mu_y`.
//! * `metropolis-demo` moves both coordinates at once with a single
//!   uniform-window Metropolis kernel.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use mwg_core::driver::{acceptance_rate, McmcRun};
use mwg_core::kernels::{adaptive_rwmh, metropolis, rwmh};
use mwg_core::target::{
    conjugate_posterior, gaussian_mean_target, mean_position, simulate_gaussian_data,
    ConjugatePosterior,
};
use mwg_core::{mwg_step, RngKey, SamplingAlgorithm, TargetLogDensity};

use crate::artifacts::{r_hat, summarize_series, write_atomic, write_json, CsvTable, SeriesSummary};
use crate::chains::run_chains;
use crate::config::{ExperimentKind, GaussianSettings};
use crate::CliError;

/// Points per axis of the exported log-density grid.
const GRID_POINTS: usize = 101;
/// Grid half-width in posterior standard deviations.
const GRID_SPAN_SDS: f64 = 4.0;

#[derive(Serialize)]
struct OracleBlock {
    mean: [f64; 2],
    sd: [f64; 2],
    cov: [[f64; 2]; 2],
}

#[derive(Serialize)]
struct GaussianSummary<'a> {
    library_version: &'static str,
    experiment: &'static str,
    seed: u64,
    wall_time_seconds: f64,
    config: &'a GaussianSettings,
    components: BTreeMap<&'static str, SeriesSummary>,
    /// One rate per kernel, in composition order.
    acceptance_rates: Vec<f64>,
    kernel_labels: Vec<&'static str>,
    /// Closed-form conjugate posterior for the same data.
    oracle: OracleBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_hat: Option<BTreeMap<&'static str, f64>>,
}

fn build_algorithm(settings: &GaussianSettings) -> Result<SamplingAlgorithm, CliError> {
    let config_err = |e: mwg_core::Error| CliError::Config(e.to_string());
    match settings.common.experiment {
        ExperimentKind::GaussianMwg => {
            let kx = mwg_step(rwmh(settings.rwmh_scale).map_err(config_err)?, &["mu_x"])
                .map_err(config_err)?;
            let ky = mwg_step(
                adaptive_rwmh(settings.adaptive_scale).map_err(config_err)?,
                &["mu_y"],
            )
            .map_err(config_err)?;
            Ok(kx >> ky)
        }
        ExperimentKind::MetropolisDemo => {
            metropolis(settings.metropolis_tau).map_err(config_err)
        }
        other => Err(CliError::Config(format!(
            "{} is not a Gaussian experiment",
            other.name()
        ))),
    }
}

fn kernel_labels(experiment: ExperimentKind) -> Vec<&'static str> {
    match experiment {
        ExperimentKind::GaussianMwg => vec!["mu_x", "mu_y"],
        _ => vec!["joint"],
    }
}

fn density_grid(target: &TargetLogDensity, oracle: &ConjugatePosterior) -> Vec<u8> {
    let sd = oracle.sd();
    let axis = |center: f64, sd: f64| -> Vec<f64> {
        let lo = center - GRID_SPAN_SDS * sd;
        let hi = center + GRID_SPAN_SDS * sd;
        (0..GRID_POINTS)
            .map(|j| lo + (hi - lo) * j as f64 / (GRID_POINTS - 1) as f64)
            .collect()
    };
    let xs = axis(oracle.mean[0], sd[0]);
    let ys = axis(oracle.mean[1], sd[1]);
    let mut table = CsvTable::new("mu_x,mu_y,log_density");
    for x in &xs {
        for y in &ys {
            let p = mean_position(*x, *y);
            let lp = target.evaluate(&p).expect("grid point matches structure");
            table.row(format_args!("{x},{y},{lp}"));
        }
    }
    table.into_bytes()
}

fn retained(run: &McmcRun, name: &str, burn_in: usize) -> Result<Vec<f64>, CliError> {
    let series = run
        .samples
        .component(name, 0)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(series[burn_in..].to_vec())
}

pub fn run(settings: &GaussianSettings) -> Result<(), CliError> {
    let started = Instant::now();
    let common = &settings.common;
    let root = RngKey::from_seed(common.seed);
    let keys = root.split(2).expect("fixed arity");
    let runtime_err = |e: mwg_core::Error| CliError::Runtime(e.to_string());

    let data = simulate_gaussian_data(&settings.model, &keys[0]).map_err(runtime_err)?;
    let target = gaussian_mean_target(&settings.model, &data).map_err(runtime_err)?;
    let oracle = conjugate_posterior(&settings.model, &data).map_err(runtime_err)?;
    let algorithm = build_algorithm(settings)?;
    let initial = mean_position(
        settings.model.prior_mean[0],
        settings.model.prior_mean[1],
    );

    let runs = run_chains(
        common.chains,
        common.num_samples,
        &algorithm,
        &target,
        &initial,
        &keys[1],
    )?;

    let dir = &common.output_dir;
    for (i, run) in runs.iter().enumerate() {
        let mut bytes = Vec::new();
        run.samples.write_csv(&mut bytes).map_err(runtime_err)?;
        let name = if i == 0 {
            "trace.csv".to_string()
        } else {
            format!("trace-chain-{i}.csv")
        };
        write_atomic(dir, &name, &bytes)?;
    }
    write_atomic(dir, "density-grid.csv", &density_grid(&target, &oracle))?;

    let mut components = BTreeMap::new();
    for name in ["mu_x", "mu_y"] {
        components.insert(name, summarize_series(&retained(&runs[0], name, common.burn_in)?));
    }
    let rates = acceptance_rate(&runs[0]).map_err(runtime_err)?;
    let cross_chain = if runs.len() > 1 {
        let mut map = BTreeMap::new();
        for name in ["mu_x", "mu_y"] {
            let series: Result<Vec<Vec<f64>>, CliError> = runs
                .iter()
                .map(|r| retained(r, name, common.burn_in))
                .collect();
            map.insert(name, r_hat(&series?));
        }
        Some(map)
    } else {
        None
    };

    let summary = GaussianSummary {
        library_version: env!("CARGO_PKG_VERSION"),
        experiment: common.experiment.name(),
        seed: common.seed,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        config: settings,
        components,
        acceptance_rates: rates,
        kernel_labels: kernel_labels(common.experiment),
        oracle: OracleBlock {
            mean: oracle.mean,
            sd: oracle.sd(),
            cov: oracle.cov,
        },
        r_hat: cross_chain,
    };
    write_json(dir, "summary.json", &summary)?;

    println!(
        "{}: {} samples ({} chains) in {:.2}s -> {}",
        common.experiment.name(),
        common.num_samples,
        common.chains,
        started.elapsed().as_secs_f64(),
        dir.display()
    );
    for (label, rate) in kernel_labels(common.experiment)
        .iter()
        .zip(&summary.acceptance_rates)
    {
        println!("  acceptance[{label}] = {rate:.3}");
    }
    for (name, s) in &summary.components {
        println!(
            "  {name}: mean {:.4} (oracle {:.4}), sd {:.4}",
            s.mean,
            if *name == "mu_x" {
                oracle.mean[0]
            } else {
                oracle.mean[1]
            },
            s.sd
        );
    }
    Ok(())
}
