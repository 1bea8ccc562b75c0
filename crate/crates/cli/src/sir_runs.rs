//! The epidemic experiments: simulating a metapopulation outbreak and
//! fitting transmission rates to observed removals by data augmentation.
//!
//! `sir-simulate` draws one realization of the chain-binomial model and
//! writes per-block event counts plus the implied compartment trajectory.
//!
//! `sir-fit` treats infection times as latent: it keeps only the removal
//! column of the supplied (or freshly simulated) events, rebuilds a feasible
//! infection history, and runs the blockwise sampler that alternates an
//! adaptive random-walk update of the log-rates with repeated move/insert
//! sweeps over the latent events. Rates are reported on the natural scale.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{s, Array2, Array3};
use serde::Serialize;

use mwg_core::driver::{acceptance_rate, McmcRun};
use mwg_core::sir::{
    build_sir_mwg, initial_latent_events, sir_position, sir_target, EpiParams, EventTensor,
    MetaPopConfig, SirModel, IR, SI,
};
use mwg_core::RngKey;

use crate::artifacts::{r_hat, summarize_series, write_atomic, write_json, CsvTable, SeriesSummary};
use crate::chains::run_chains;
use crate::config::SirSettings;
use crate::CliError;

const EVENTS_HEADER: &str = "block,population,infections,removals";
const TRAJECTORY_HEADER: &str = "block,population,susceptible,infected,removed";

/// Acceptance-rate labels for the three kernels of the fit, in the order
/// their diagnostics appear in the flattened info tree.
const KERNEL_LABELS: [&str; 3] = ["parameters", "move_events", "initial_conditions"];

fn runtime_err(e: mwg_core::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn build_model(settings: &SirSettings) -> Result<Arc<SirModel>, CliError> {
    SirModel::new(settings.model.clone(), &settings.initial())
        .map(Arc::new)
        .map_err(|e| CliError::Config(e.to_string()))
}

fn events_csv(events: &EventTensor) -> Vec<u8> {
    let (t_max, m, _) = events.dim();
    let mut table = CsvTable::new(EVENTS_HEADER);
    for t in 0..t_max {
        for i in 0..m {
            table.row(format_args!(
                "{t},{i},{},{}",
                events[(t, i, SI)],
                events[(t, i, IR)]
            ));
        }
    }
    table.into_bytes()
}

fn trajectory_csv(trajectory: &Array3<i64>) -> Vec<u8> {
    let (blocks, m, _) = trajectory.dim();
    let mut table = CsvTable::new(TRAJECTORY_HEADER);
    for t in 0..blocks {
        for i in 0..m {
            table.row(format_args!(
                "{t},{i},{},{},{}",
                trajectory[(t, i, 0)],
                trajectory[(t, i, 1)],
                trajectory[(t, i, 2)]
            ));
        }
    }
    table.into_bytes()
}

/// Parses an `events.csv`-shaped file against the configured dimensions.
/// Every `(block, population)` cell must appear exactly once.
fn read_events_csv(path: &Path, config: &MetaPopConfig) -> Result<EventTensor, CliError> {
    let bad = |line: usize, what: String| {
        CliError::Config(format!("{}:{line}: {what}", path.display()))
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read events file {}: {e}", path.display()))
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == EVENTS_HEADER => {}
        Some((_, header)) => {
            return Err(bad(1, format!(
                "unexpected header {header:?}; expected {EVENTS_HEADER:?}"
            )))
        }
        None => return Err(bad(1, "file is empty".into())),
    }
    let (t_max, m) = (config.num_times, config.num_pops);
    let mut events: EventTensor = Array3::zeros((t_max, m, 2));
    let mut seen = Array2::<bool>::from_elem((t_max, m), false);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(line_no, format!("expected 4 fields, got {}", fields.len())));
        }
        let parse = |s: &str, what: &str| -> Result<i64, CliError> {
            s.trim()
                .parse::<i64>()
                .map_err(|e| bad(line_no, format!("invalid {what} {s:?}: {e}")))
        };
        let t = parse(fields[0], "block")?;
        let i = parse(fields[1], "population")?;
        let si = parse(fields[2], "infection count")?;
        let ir = parse(fields[3], "removal count")?;
        if t < 0 || t as usize >= t_max {
            return Err(bad(line_no, format!("block {t} outside 0..{t_max}")));
        }
        if i < 0 || i as usize >= m {
            return Err(bad(line_no, format!("population {i} outside 0..{m}")));
        }
        if si < 0 || ir < 0 {
            return Err(bad(line_no, "event counts must be non-negative".into()));
        }
        let (t, i) = (t as usize, i as usize);
        if seen[(t, i)] {
            return Err(bad(line_no, format!("duplicate cell (block {t}, population {i})")));
        }
        seen[(t, i)] = true;
        events[(t, i, SI)] = si;
        events[(t, i, IR)] = ir;
    }
    if let Some(((t, i), _)) = seen.indexed_iter().find(|(_, &s)| !s) {
        return Err(CliError::Config(format!(
            "{}: missing row for block {t}, population {i}",
            path.display()
        )));
    }
    Ok(events)
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    library_version: &'static str,
    experiment: &'static str,
    seed: u64,
    wall_time_seconds: f64,
    config: &'a SirSettings,
    /// Per-population totals over the whole run.
    total_infections: Vec<i64>,
    total_removals: Vec<i64>,
    /// `(S, I, R)` at the final block boundary.
    final_state: Vec<[i64; 3]>,
}

pub fn run_simulate(settings: &SirSettings) -> Result<(), CliError> {
    let started = Instant::now();
    let common = &settings.common;
    let model = build_model(settings)?;
    let keys = RngKey::from_seed(common.seed).split(2).expect("fixed arity");
    let events = model.simulate(&settings.params, &keys[0]);
    let trajectory = model
        .state_trajectory(events.view())
        .map_err(runtime_err)?
        .ok_or_else(|| CliError::Runtime("simulated events were infeasible".into()))?;

    let dir = &common.output_dir;
    write_atomic(dir, "events.csv", &events_csv(&events))?;
    write_atomic(dir, "trajectory.csv", &trajectory_csv(&trajectory))?;

    let m = settings.model.num_pops;
    let last = trajectory.dim().0 - 1;
    let summary = SimulateSummary {
        library_version: env!("CARGO_PKG_VERSION"),
        experiment: common.experiment.name(),
        seed: common.seed,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        config: settings,
        total_infections: (0..m)
            .map(|i| events.slice(s![.., i, SI]).sum())
            .collect(),
        total_removals: (0..m)
            .map(|i| events.slice(s![.., i, IR]).sum())
            .collect(),
        final_state: (0..m)
            .map(|i| {
                [
                    trajectory[(last, i, 0)],
                    trajectory[(last, i, 1)],
                    trajectory[(last, i, 2)],
                ]
            })
            .collect(),
    };
    write_json(dir, "summary.json", &summary)?;

    println!(
        "{}: simulated {} blocks x {} populations in {:.2}s -> {}",
        common.experiment.name(),
        settings.model.num_times,
        m,
        started.elapsed().as_secs_f64(),
        dir.display()
    );
    for (i, (si, ir)) in summary
        .total_infections
        .iter()
        .zip(&summary.total_removals)
        .enumerate()
    {
        println!("  population {i}: {si} infections, {ir} removals");
    }
    Ok(())
}

#[derive(Serialize)]
struct FitSummary<'a> {
    library_version: &'static str,
    experiment: &'static str,
    seed: u64,
    wall_time_seconds: f64,
    config: &'a SirSettings,
    /// Where the observed removals came from.
    data_source: &'static str,
    /// Rates used to simulate the data, when the data were simulated here.
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<EpiParams>,
    /// Natural-scale posterior summaries of the transmission rates.
    betas: BTreeMap<&'static str, SeriesSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci_contains_truth: Option<BTreeMap<&'static str, bool>>,
    acceptance_rates: BTreeMap<&'static str, f64>,
    /// Fraction of each population removed by the end of the data.
    removed_fraction: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_hat: Option<BTreeMap<&'static str, f64>>,
}

/// Natural-scale transmission-rate series with burn-in removed.
fn beta_series(run: &McmcRun, name: &str, burn_in: usize) -> Result<Vec<f64>, CliError> {
    let series = run.samples.component(name, 0).map_err(runtime_err)?;
    Ok(series[burn_in..].iter().map(|v| v.exp()).collect())
}

pub fn run_fit(settings: &SirSettings) -> Result<(), CliError> {
    let started = Instant::now();
    let common = &settings.common;
    let model = build_model(settings)?;
    let keys = RngKey::from_seed(common.seed).split(2).expect("fixed arity");

    let (observed, data_source, truth) = match &settings.events_csv {
        Some(path) => (read_events_csv(path, &settings.model)?, "file", None),
        None => (
            model.simulate(&settings.params, &keys[0]),
            "simulated",
            Some(settings.params),
        ),
    };
    let removals: Array2<i64> = observed.slice(s![.., .., IR]).to_owned();
    // Only the removal column is data; infection counts are re-imputed.
    let initial_events = initial_latent_events(&model, &removals).map_err(|e| {
        if settings.events_csv.is_some() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(format!("simulated data lost feasibility: {e}"))
        }
    })?;
    // Start the rates at a neutral point independent of any truth: a
    // within-population reproduction number of one and half that coupling.
    let beta0 = [settings.model.gamma, 0.5 * settings.model.gamma];
    let initial =
        sir_position(beta0[0].ln(), beta0[1].ln(), &initial_events).map_err(runtime_err)?;
    let target = sir_target(&model);
    let algorithm = build_sir_mwg(&settings.model, settings.param_scale)
        .map_err(|e| CliError::Config(e.to_string()))?;

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
        let b1 = run.samples.component("beta1", 0).map_err(runtime_err)?;
        let b2 = run.samples.component("beta2", 0).map_err(runtime_err)?;
        let mut table = CsvTable::new("iteration,beta1,beta2");
        for (row, (l1, l2)) in b1.iter().zip(&b2).enumerate() {
            table.row(format_args!("{},{},{}", row + 1, l1.exp(), l2.exp()));
        }
        let name = if i == 0 {
            "beta-trace.csv".to_string()
        } else {
            format!("beta-trace-chain-{i}.csv")
        };
        write_atomic(dir, &name, &table.into_bytes())?;
    }

    // Posterior mean infection counts per block, pooled over chains.
    let (t_max, m) = removals.dim();
    let retained = (common.num_samples - common.burn_in) as f64;
    let mut posterior_table = CsvTable::new("block,population,mean_infections,observed_removals");
    for t in 0..t_max {
        for i in 0..m {
            let flat = (t * m + i) * 2 + SI;
            let mut total = 0.0;
            for run in &runs {
                let series = run.samples.component("events", flat).map_err(runtime_err)?;
                total += series[common.burn_in..].iter().sum::<f64>();
            }
            let mean = total / (retained * runs.len() as f64);
            posterior_table.row(format_args!("{t},{i},{mean},{}", removals[(t, i)]));
        }
    }
    write_atomic(dir, "event-posterior.csv", &posterior_table.into_bytes())?;

    let mut betas = BTreeMap::new();
    for name in ["beta1", "beta2"] {
        betas.insert(name, summarize_series(&beta_series(&runs[0], name, common.burn_in)?));
    }
    let ci_contains_truth = truth.map(|t| {
        let mut map = BTreeMap::new();
        for (name, value) in [("beta1", t.beta1), ("beta2", t.beta2)] {
            let ci = betas[name].ci95;
            map.insert(name, ci[0] <= value && value <= ci[1]);
        }
        map
    });
    let rates = acceptance_rate(&runs[0]).map_err(runtime_err)?;
    if rates.len() != KERNEL_LABELS.len() {
        return Err(CliError::Runtime(format!(
            "expected {} kernel diagnostics, found {}",
            KERNEL_LABELS.len(),
            rates.len()
        )));
    }
    let cross_chain = if runs.len() > 1 {
        let mut map = BTreeMap::new();
        for name in ["beta1", "beta2"] {
            let series: Result<Vec<Vec<f64>>, CliError> = runs
                .iter()
                .map(|r| beta_series(r, name, common.burn_in))
                .collect();
            map.insert(name, r_hat(&series?));
        }
        Some(map)
    } else {
        None
    };
    let populations = &settings.model.population;
    let summary = FitSummary {
        library_version: env!("CARGO_PKG_VERSION"),
        experiment: common.experiment.name(),
        seed: common.seed,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        config: settings,
        data_source,
        truth,
        betas,
        ci_contains_truth,
        acceptance_rates: KERNEL_LABELS.iter().copied().zip(rates).collect(),
        removed_fraction: (0..m)
            .map(|i| removals.column(i).sum() as f64 / populations[i] as f64)
            .collect(),
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
    for (name, s) in &summary.betas {
        let truth_note = match (name, truth) {
            (&"beta1", Some(t)) => format!(" (truth {})", t.beta1),
            (&"beta2", Some(t)) => format!(" (truth {})", t.beta2),
            _ => String::new(),
        };
        println!(
            "  {name}: mean {:.4}, 95% CI [{:.4}, {:.4}]{truth_note}",
            s.mean, s.ci95[0], s.ci95[1]
        );
    }
    for (label, rate) in &summary.acceptance_rates {
        println!("  acceptance[{label}] = {rate:.3}");
    }
    Ok(())
}
