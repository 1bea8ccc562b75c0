//! End-to-end acceptance checks, one per contract criterion.
//!
//! Each test prints a single `[PASS]`/`[FAIL]` line (visible with
//! `cargo test --test acceptance -- --nocapture`) and then asserts, so a
//! failing criterion is both visible and red. Tolerances and budgets are
//! pinned as constants at the top of the file; they are part of the
//! contract and are never loosened to make a run pass.
//!
//! The checks deliberately re-derive their expectations through independent
//! routes — brute-force enumeration, closed-form conjugate posteriors,
//! batch recomputation of running statistics, and reference CDFs — rather
//! than reusing the library's own shortcuts.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use ndarray::{Array2, Array3, ArrayView3};
use statrs::distribution::{ContinuousCDF, Normal};

use mwg_core::driver::{acceptance_rate, geweke_z, mcmc, quantile};
use mwg_core::kernels::{adaptive_rwmh, metropolis, rwmh};
use mwg_core::sir::{
    build_sir_mwg, initial_conditions_kernel, initial_latent_events, move_event_kernel,
    reference_scenario, sir_position, sir_target, EpiParams, InitialState, MetaPopConfig,
    SirModel, IR,
};
use mwg_core::target::{
    conjugate_posterior, gaussian_mean_target, mean_position, simulate_gaussian_data,
    standard_normal_target, GaussianModelSpec,
};
use mwg_core::{mwg_step, Position, RngKey, SamplingAlgorithm, TargetLogDensity, Tensor};

use std::sync::Arc;

// ---------------------------------------------------------------------------
// Pinned tolerances and budgets.

/// 1: likelihood normalization over the enumerated tiny instance.
const C1_NORMALIZATION_TOL: f64 = 1e-9;
const C1_BUDGET: Duration = Duration::from_secs(1);

/// 2: conditioning must equal evaluation of the merged position, bitwise.
const C2_CASES: usize = 1_000;
const C2_BUDGET: Duration = Duration::from_secs(1);

/// 3: blockwise scope isolation over the two-kernel compound.
const C3_STEPS: usize = 1_000;
const C3_BUDGET: Duration = Duration::from_secs(5);

/// 4: Gaussian mean recovery and the pinned nominal acceptance rates.
const C4_MEAN_TOL_SDS: f64 = 3.0;
const C4_NOMINAL_RATES: [f64; 2] = [0.285, 0.322];
const C4_RATE_TOL: f64 = 0.10;
const C4_BUDGET: Duration = Duration::from_secs(60);

/// 5: two-sided Kolmogorov–Smirnov at the 1% level, finite-sample adjusted.
const C5_KS_CRITICAL: f64 = 1.628;
const C5_BURN_IN: usize = 2_000;
const C5_THIN: usize = 10;
const C5_BUDGET: Duration = Duration::from_secs(60);

/// 6: one-step stationarity on the standard normal.
const C6_CHAINS: usize = 5_000;
const C6_SE_LIMIT: f64 = 4.0;
const C6_BUDGET: Duration = Duration::from_secs(10);

/// 7: running moments versus batch recomputation.
const C7_STEPS: usize = 1_000;
const C7_FROBENIUS_TOL: f64 = 1e-10;
const C7_BUDGET: Duration = Duration::from_secs(1);

/// 8: latent-event kernel versus the enumerated conditional posterior.
const C8_STEPS: usize = 1_000_000;
const C8_TV_LIMIT: f64 = 0.05;
const C8_BUDGET: Duration = Duration::from_secs(120);

/// 9: desk-scale epidemic recovery at the shipped seed.
const C9_GEWEKE_CRITICAL: f64 = 2.5758; // two-sided 1%
const C9_BUDGET: Duration = Duration::from_secs(600);

/// 10: determinism and composition associativity.
const C10_STEPS: usize = 100;
const C10_BUDGET: Duration = Duration::from_secs(5);

/// Seed shipped as the default of the command-line experiments; criteria 4,
/// 5, and 9 are pinned to it.
const SHIPPED_SEED: u64 = 42;

// ---------------------------------------------------------------------------
// Shared plumbing.

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[{verdict}] criterion {criterion}: {detail}");
    assert!(pass, "criterion {criterion}: {detail}");
}

/// One population of four people observed over two blocks: small enough to
/// enumerate every event tensor exhaustively.
fn tiny_instance() -> (MetaPopConfig, EpiParams, Arc<SirModel>) {
    let config = MetaPopConfig {
        num_pops: 1,
        population: vec![4],
        connectivity: vec![vec![0.0]],
        gamma: 0.4,
        num_times: 2,
        delta_t: 1.0,
        init_window: 2,
    };
    let params = EpiParams {
        beta1: 0.9,
        beta2: 0.4,
    };
    let initial = InitialState {
        x0: vec![[3, 1, 0]],
    };
    let model = Arc::new(SirModel::new(config.clone(), &initial).expect("valid instance"));
    (config, params, model)
}

/// Every event tensor with per-cell counts in `0..=cap`, by odometer.
fn enumerate_layouts(t_max: usize, m: usize, cap: i64) -> Vec<Array3<i64>> {
    let cells = t_max * m * 2;
    let mut digits = vec![0i64; cells];
    let mut out = Vec::new();
    loop {
        out.push(
            Array3::from_shape_vec((t_max, m, 2), digits.clone())
                .expect("shape matches digit count"),
        );
        let mut i = 0;
        loop {
            if i == cells {
                return out;
            }
            digits[i] += 1;
            if digits[i] <= cap {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// The shipped Gaussian experiment: data simulated from the default model,
/// with the derived target and conjugate closed form. Key layout matches
/// the command-line runner: `[data, chains]`, chain 0 at `fold_in(0)`.
fn gaussian_experiment() -> (GaussianModelSpec, TargetLogDensity, [f64; 2], [f64; 2], RngKey) {
    let spec = GaussianModelSpec::default();
    let keys = RngKey::from_seed(SHIPPED_SEED).split(2).unwrap();
    let data = simulate_gaussian_data(&spec, &keys[0]).unwrap();
    let target = gaussian_mean_target(&spec, &data).unwrap();
    let oracle = conjugate_posterior(&spec, &data).unwrap();
    (spec, target, oracle.mean, oracle.sd(), keys[1].fold_in(0))
}

fn scalar_bits(p: &Position, name: &str) -> u64 {
    p.get(name).unwrap().as_scalar_f64().unwrap().to_bits()
}

fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_01_likelihood_normalization() {
    let start = Instant::now();
    let (config, params, model) = tiny_instance();
    let cap = config.population[0];
    let layouts = enumerate_layouts(config.num_times, config.num_pops, cap);
    let mut total = 0.0;
    let mut feasible = 0usize;
    for layout in &layouts {
        let ll = model.log_likelihood(&params, layout.view());
        if ll.is_finite() {
            feasible += 1;
            total += ll.exp();
        }
    }
    let gap = (total - 1.0).abs();
    let elapsed = start.elapsed();
    let pass = gap <= C1_NORMALIZATION_TOL && feasible > 1 && elapsed <= C1_BUDGET;
    report(
        1,
        pass,
        &format!(
            "sum of event-history probabilities over {} layouts ({feasible} feasible) \
             is 1 within {gap:.2e} (tol {C1_NORMALIZATION_TOL:.0e}), {:.2?} of {C1_BUDGET:?}",
            layouts.len(),
            elapsed
        ),
    );
}

#[test]
fn criterion_02_conditioning_matches_merged_evaluation() {
    let start = Instant::now();
    let (_, gaussian, ..) = gaussian_experiment();
    let (config, _, sir_model) = tiny_instance();
    let sir = sir_target(&sir_model);
    let key = RngKey::from_seed(202).fold_in(7);

    let mut checked = 0usize;
    for i in 0..C2_CASES {
        let mut stream = key.fold_in(i as u64).stream();
        // Gaussian: fix mu_y, vary mu_x.
        let mu_x = 10.0 * (stream.uniform() - 0.5);
        let mu_y = 10.0 * (stream.uniform() - 0.5);
        let full = mean_position(mu_x, mu_y);
        let (free, fixed) = full.project(&["mu_x"]).unwrap();
        let conditioned = gaussian.condition(&fixed).unwrap();
        let a = conditioned.evaluate(&free).unwrap();
        let b = gaussian.evaluate(&fixed.merge(&free).unwrap()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits(), "gaussian case {i}");

        // Epidemic: fix the rates, vary the (possibly infeasible) events.
        let cells = config.num_times * config.num_pops * 2;
        let counts: Vec<i64> = (0..cells).map(|_| stream.integer_uniform(0, 5)).collect();
        let events =
            Array3::from_shape_vec((config.num_times, config.num_pops, 2), counts).unwrap();
        let position = sir_position(
            stream.uniform_in(-3.0, 1.0),
            stream.uniform_in(-3.0, 1.0),
            &events,
        )
        .unwrap();
        let (free, fixed) = position.project(&["events"]).unwrap();
        let conditioned = sir.condition(&fixed).unwrap();
        let a = conditioned.evaluate(&free).unwrap();
        let b = sir.evaluate(&fixed.merge(&free).unwrap()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits(), "sir case {i}");
        checked += 1;
    }
    let elapsed = start.elapsed();
    let pass = checked == C2_CASES && elapsed <= C2_BUDGET;
    report(
        2,
        pass,
        &format!(
            "conditioned density bitwise-equals merged evaluation in {checked} Gaussian \
             and {checked} epidemic cases, {:.2?} of {C2_BUDGET:?}",
            elapsed
        ),
    );
}

#[test]
fn criterion_03_blockwise_scope_isolation() {
    let start = Instant::now();
    let (spec, target, .., chain_key) = gaussian_experiment();
    let kernel_x = mwg_step(rwmh(1.8).unwrap(), &["mu_x"]).unwrap();
    let kernel_y = mwg_step(adaptive_rwmh(1.0).unwrap(), &["mu_y"]).unwrap();
    let compound = kernel_x.clone().then(kernel_y.clone());

    let initial = mean_position(spec.prior_mean[0], spec.prior_mean[1]);
    let mut state = compound.init(&target, &initial).unwrap();
    for i in 0..C3_STEPS {
        let key = chain_key.fold_in(i as u64);
        let sub_keys = key.split(2).unwrap();
        let kernel_states = state.kernel.as_seq().unwrap().to_vec();

        // First sub-step: only mu_x may change.
        let before_y = scalar_bits(&state.chain.position, "mu_y");
        let sub = mwg_core::ChainAndKernelState::new(state.chain.clone(), kernel_states[0].clone());
        let (after_x, info_x) = kernel_x.step(&target, &sub, &sub_keys[0]).unwrap();
        assert_eq!(
            scalar_bits(&after_x.chain.position, "mu_y"),
            before_y,
            "step {i}: first sub-step touched the untargeted coordinate"
        );

        // Second sub-step: only mu_y may change.
        let before_x = scalar_bits(&after_x.chain.position, "mu_x");
        let sub = mwg_core::ChainAndKernelState::new(after_x.chain.clone(), kernel_states[1].clone());
        let (after_y, info_y) = kernel_y.step(&target, &sub, &sub_keys[1]).unwrap();
        assert_eq!(
            scalar_bits(&after_y.chain.position, "mu_x"),
            before_x,
            "step {i}: second sub-step touched the untargeted coordinate"
        );

        // The compound step must equal the two sub-steps run in order, and
        // carry their diagnostics as a length-2 ordered sequence.
        let (after, info) = compound.step(&target, &state, &key).unwrap();
        assert!(after.chain.position.bitwise_eq(&after_y.chain.position));
        let seq = info.as_seq().unwrap();
        assert_eq!(seq.len(), 2);
        assert!(seq[0].as_leaf().unwrap().bitwise_eq(info_x.as_leaf().unwrap()));
        assert!(seq[1].as_leaf().unwrap().bitwise_eq(info_y.as_leaf().unwrap()));
        assert!(seq[0].as_leaf().unwrap().contains("proposed.mu_x"));
        assert!(seq[1].as_leaf().unwrap().contains("proposed.mu_y"));
        state = after;
    }
    let elapsed = start.elapsed();
    let pass = elapsed <= C3_BUDGET;
    report(
        3,
        pass,
        &format!(
            "untargeted coordinates bit-identical across each child sub-step for \
             {C3_STEPS} compound steps; diagnostics are a length-2 ordered sequence; \
             {:.2?} of {C3_BUDGET:?}",
            elapsed
        ),
    );
}

#[test]
fn criterion_04_gaussian_recovery_with_nominal_rates() {
    let start = Instant::now();
    let (spec, target, oracle_mean, oracle_sd, chain_key) = gaussian_experiment();
    let algorithm = mwg_step(rwmh(1.8).unwrap(), &["mu_x"]).unwrap()
        >> mwg_step(adaptive_rwmh(1.0).unwrap(), &["mu_y"]).unwrap();
    let initial = mean_position(spec.prior_mean[0], spec.prior_mean[1]);
    let run = mcmc(10_000, &algorithm, &target, &initial, &chain_key).unwrap();

    let burn_in = 2_000;
    let mut mean_ok = true;
    let mut mean_detail = String::new();
    for (i, name) in ["mu_x", "mu_y"].iter().enumerate() {
        let series = run.samples.component(name, 0).unwrap();
        let (mean, _) = mean_and_sd(&series[burn_in..]);
        let gap_sds = (mean - oracle_mean[i]).abs() / oracle_sd[i];
        mean_ok &= gap_sds <= C4_MEAN_TOL_SDS;
        mean_detail.push_str(&format!("{name} off by {gap_sds:.2} sd, "));
    }

    let rates = acceptance_rate(&run).unwrap();
    let rates_ok = rates
        .iter()
        .zip(C4_NOMINAL_RATES)
        .all(|(r, nominal)| (r - nominal).abs() <= C4_RATE_TOL);

    let elapsed = start.elapsed();
    let pass = mean_ok && rates_ok && elapsed <= C4_BUDGET;
    // The nominal rates are pinned alongside the pinned proposal scales, but
    // they are not jointly attainable: the conditional posterior of mu_x has
    // standard deviation ~0.035, so a symmetric random walk with scale 1.8
    // proposes ~52 posterior widths per move and can accept at most a few
    // percent of proposals (observed ~0.026, bounded near 0.8*sigma/scale ~
    // 0.015), not 0.285. The adaptive kernel's run average is likewise
    // dragged below its nominal band by the long approach from the far
    // start. The targets stay pinned and the check reports honestly.
    report(
        4,
        pass,
        &format!(
            "means: {mean_detail}(tol {C4_MEAN_TOL_SDS} sd); acceptance rates \
             ({:.3}, {:.3}) vs nominal ({}, {}) within +/-{C4_RATE_TOL}: {rates_ok}; \
             {:.2?} of {C4_BUDGET:?}",
            rates[0], rates[1], C4_NOMINAL_RATES[0], C4_NOMINAL_RATES[1], elapsed
        ),
    );
}

#[test]
fn criterion_05_metropolis_demo_marginals_pass_ks() {
    let start = Instant::now();
    let (spec, target, oracle_mean, oracle_sd, chain_key) = gaussian_experiment();
    let algorithm = metropolis(0.085).unwrap();
    let initial = mean_position(spec.prior_mean[0], spec.prior_mean[1]);
    let run = mcmc(10_000, &algorithm, &target, &initial, &chain_key).unwrap();

    let mut stats = Vec::new();
    let mut all_ok = true;
    for (i, name) in ["mu_x", "mu_y"].iter().enumerate() {
        let series = run.samples.component(name, 0).unwrap();
        let mut thinned: Vec<f64> = series[C5_BURN_IN..]
            .iter()
            .copied()
            .step_by(C5_THIN)
            .collect();
        thinned.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let marginal = Normal::new(oracle_mean[i], oracle_sd[i]).unwrap();
        let n = thinned.len() as f64;
        let mut d: f64 = 0.0;
        for (j, x) in thinned.iter().enumerate() {
            let f = marginal.cdf(*x);
            d = d.max((j as f64 + 1.0) / n - f).max(f - j as f64 / n);
        }
        // Finite-sample adjustment of the two-sided KS statistic.
        let adjusted = d * (n.sqrt() + 0.12 + 0.11 / n.sqrt());
        all_ok &= adjusted < C5_KS_CRITICAL;
        stats.push(format!("{name} KS {adjusted:.3}"));
    }
    let elapsed = start.elapsed();
    let pass = all_ok && elapsed <= C5_BUDGET;
    report(
        5,
        pass,
        &format!(
            "{} vs critical {C5_KS_CRITICAL} at 1% ({} samples after burn-in {C5_BURN_IN}, \
             thin {C5_THIN}); {:.2?} of {C5_BUDGET:?}",
            stats.join(", "),
            (10_000 - C5_BURN_IN) / C5_THIN,
            elapsed
        ),
    );
}

#[test]
fn criterion_06_one_step_stationarity_for_each_kernel() {
    let start = Instant::now();
    let target = standard_normal_target();
    let kernels: Vec<(&str, SamplingAlgorithm)> = vec![
        ("metropolis", metropolis(1.0).unwrap()),
        ("rwmh", rwmh(2.4).unwrap()),
        ("adaptive_rwmh", adaptive_rwmh(2.4).unwrap()),
    ];
    let base = RngKey::from_seed(606);
    let mut details = Vec::new();
    let mut all_ok = true;
    for (label, kernel) in &kernels {
        let key = base.fold_in(details.len() as u64);
        let mut mean_diffs = Vec::with_capacity(C6_CHAINS);
        let mut square_diffs = Vec::with_capacity(C6_CHAINS);
        for i in 0..C6_CHAINS {
            let (draw_key, step_key) = key.fold_in(i as u64).split2();
            let x0 = draw_key.stream().standard_normal();
            let position = Position::from_pairs([("x", Tensor::scalar_f64(x0))]).unwrap();
            let state = kernel.init(&target, &position).unwrap();
            let (next, _) = kernel.step(&target, &state, &step_key).unwrap();
            let x1 = next.chain.position.get("x").unwrap().as_scalar_f64().unwrap();
            mean_diffs.push(x1 - x0);
            square_diffs.push(x1 * x1 - x0 * x0);
        }
        let n = C6_CHAINS as f64;
        let (dm, sm) = mean_and_sd(&mean_diffs);
        let (dv, sv) = mean_and_sd(&square_diffs);
        let z_mean = dm.abs() / (sm / n.sqrt());
        let z_var = dv.abs() / (sv / n.sqrt());
        all_ok &= z_mean < C6_SE_LIMIT && z_var < C6_SE_LIMIT;
        details.push(format!("{label}: mean {z_mean:.2} se, var {z_var:.2} se"));
    }
    let elapsed = start.elapsed();
    let pass = all_ok && elapsed <= C6_BUDGET;
    report(
        6,
        pass,
        &format!(
            "{} ({} chains each, limit {C6_SE_LIMIT} se); {:.2?} of {C6_BUDGET:?}",
            details.join("; "),
            C6_CHAINS,
            elapsed
        ),
    );
}

#[test]
fn criterion_07_running_covariance_equals_batch() {
    let start = Instant::now();
    let (_, target, .., chain_key) = gaussian_experiment();
    let kernel = adaptive_rwmh(0.9).unwrap();
    let mut state = kernel.init(&target, &mean_position(6.0, 4.0)).unwrap();
    let mut visited = Vec::with_capacity(C7_STEPS);
    for i in 0..C7_STEPS {
        let (next, _) = kernel.step(&target, &state, &chain_key.fold_in(i as u64)).unwrap();
        let p = &next.chain.position;
        visited.push([
            p.get("mu_x").unwrap().as_scalar_f64().unwrap(),
            p.get("mu_y").unwrap().as_scalar_f64().unwrap(),
        ]);
        state = next;
    }

    // Batch moments of the visited states (population normalization).
    let n = visited.len() as f64;
    let mut batch_mean = [0.0f64; 2];
    for x in &visited {
        batch_mean[0] += x[0] / n;
        batch_mean[1] += x[1] / n;
    }
    let mut batch_cov = [[0.0f64; 2]; 2];
    for x in &visited {
        let d = [x[0] - batch_mean[0], x[1] - batch_mean[1]];
        for r in 0..2 {
            for c in 0..2 {
                batch_cov[r][c] += d[r] * d[c] / n;
            }
        }
    }

    let payload = state.kernel.as_leaf().unwrap();
    let steps = payload.get("step_count").unwrap().as_scalar_i64().unwrap();
    let running_mean = payload.get("running_mean").unwrap().as_f64_array().unwrap();
    let running_cov = payload.get("running_cov").unwrap().as_f64_array().unwrap();
    let mut frobenius = 0.0f64;
    for r in 0..2 {
        for c in 0..2 {
            frobenius += (running_cov[[r, c]] - batch_cov[r][c]).powi(2);
        }
    }
    frobenius = frobenius.sqrt();
    let mean_gap = (0..2)
        .map(|i| (running_mean[[i]] - batch_mean[i]).abs())
        .fold(0.0f64, f64::max);

    let elapsed = start.elapsed();
    let pass = steps == C7_STEPS as i64
        && frobenius <= C7_FROBENIUS_TOL
        && mean_gap <= C7_FROBENIUS_TOL
        && elapsed <= C7_BUDGET;
    report(
        7,
        pass,
        &format!(
            "after {steps} steps: running vs batch covariance differs by {frobenius:.2e} \
             Frobenius, means by {mean_gap:.2e} (tol {C7_FROBENIUS_TOL:.0e}); \
             {:.2?} of {C7_BUDGET:?}",
            elapsed
        ),
    );
}

#[test]
fn criterion_08_latent_event_kernel_matches_enumerated_posterior() {
    let start = Instant::now();
    let (config, params, model) = tiny_instance();
    // One removal in each block: feasible, with a non-trivial conditional
    // class of infection histories behind it.
    let observed = Array2::from_shape_vec((2, 1), vec![1i64, 1]).unwrap();

    // Reference distribution: enumerate every event tensor, keep those that
    // reproduce the observed removals with positive density, and normalize.
    let mut reference: HashMap<Vec<i64>, f64> = HashMap::new();
    let mut total = 0.0;
    for layout in enumerate_layouts(config.num_times, config.num_pops, config.population[0]) {
        let matches = (0..config.num_times)
            .all(|t| layout[(t, 0, IR)] == observed[(t, 0)]);
        if !matches {
            continue;
        }
        let weight = model.log_likelihood(&params, layout.view()).exp();
        if weight > 0.0 {
            reference.insert(layout.iter().copied().collect(), weight);
            total += weight;
        }
    }
    for w in reference.values_mut() {
        *w /= total;
    }
    assert!(reference.len() > 2, "conditional class should not be trivial");

    // Chain: move and insert/delete sweeps over the latent events, with the
    // rates held fixed at the simulation values.
    let initial_events = initial_latent_events(&model, &observed).unwrap();
    let initial = sir_position(params.beta1.ln(), params.beta2.ln(), &initial_events).unwrap();
    let target = sir_target(&model);
    let algorithm = mwg_step(move_event_kernel(&config), &["events"]).unwrap()
        >> mwg_step(initial_conditions_kernel(&config), &["events"]).unwrap();

    let key = RngKey::from_seed(808).fold_in(1);
    let mut state = algorithm.init(&target, &initial).unwrap();
    let mut counts: HashMap<Vec<i64>, u64> = HashMap::new();
    for i in 0..C8_STEPS {
        let (next, _) = algorithm.step(&target, &state, &key.fold_in(i as u64)).unwrap();
        state = next;
        let events = state.chain.position.get("events").unwrap().as_i64_array().unwrap();
        *counts.entry(events.iter().copied().collect()).or_default() += 1;
    }

    let mut tv = 0.0;
    for (layout, p) in &reference {
        let q = *counts.get(layout).unwrap_or(&0) as f64 / C8_STEPS as f64;
        tv += (p - q).abs();
    }
    for (layout, c) in &counts {
        if !reference.contains_key(layout) {
            // Mass on a state outside the support would be an outright bug.
            tv += *c as f64 / C8_STEPS as f64;
        }
    }
    tv /= 2.0;

    let elapsed = start.elapsed();
    let pass = tv <= C8_TV_LIMIT && elapsed <= C8_BUDGET;
    report(
        8,
        pass,
        &format!(
            "total variation {tv:.4} vs enumerated conditional posterior over \
             {} histories after {C8_STEPS} steps (limit {C8_TV_LIMIT}); {:.2?} of {C8_BUDGET:?}",
            reference.len(),
            elapsed
        ),
    );
}

#[test]
fn criterion_09_desk_scale_recovery_at_shipped_seed() {
    let start = Instant::now();
    let (config, truth, initial_state) = reference_scenario();
    let model = Arc::new(SirModel::new(config.clone(), &initial_state).unwrap());
    let keys = RngKey::from_seed(SHIPPED_SEED).split(2).unwrap();
    let observed_events = model.simulate(&truth, &keys[0]);
    let removals: Array2<i64> = {
        let view: ArrayView3<i64> = observed_events.view();
        let mut out = Array2::zeros((config.num_times, config.num_pops));
        for t in 0..config.num_times {
            for i in 0..config.num_pops {
                out[(t, i)] = view[(t, i, IR)];
            }
        }
        out
    };

    let initial_events = initial_latent_events(&model, &removals).unwrap();
    let initial = sir_position(
        config.gamma.ln(),
        (0.5 * config.gamma).ln(),
        &initial_events,
    )
    .unwrap();
    let target = sir_target(&model);
    let algorithm = build_sir_mwg(&config, 0.5).unwrap();
    let run = mcmc(20_000, &algorithm, &target, &initial, &keys[1].fold_in(0)).unwrap();

    let burn_in = 4_000;
    let mut all_ok = true;
    let mut details = Vec::new();
    for (name, true_value) in [("beta1", truth.beta1), ("beta2", truth.beta2)] {
        let natural: Vec<f64> = run.samples.component(name, 0).unwrap()[burn_in..]
            .iter()
            .map(|v| v.exp())
            .collect();
        let mut sorted = natural.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = quantile(&sorted, 0.025);
        let hi = quantile(&sorted, 0.975);
        let covered = lo <= true_value && true_value <= hi;
        let z = geweke_z(&natural);
        all_ok &= covered && z.abs() < C9_GEWEKE_CRITICAL;
        details.push(format!(
            "{name}: truth {true_value} in [{lo:.3}, {hi:.3}] = {covered}, split z {z:.2}"
        ));
    }
    let elapsed = start.elapsed();
    let pass = all_ok && elapsed <= C9_BUDGET;
    report(
        9,
        pass,
        &format!(
            "{} (z limit {C9_GEWEKE_CRITICAL}); {:.2?} of {C9_BUDGET:?}",
            details.join("; "),
            elapsed
        ),
    );
}

#[test]
fn criterion_10_determinism_and_associativity() {
    let start = Instant::now();
    let (_, target, .., chain_key) = gaussian_experiment();

    // Same configuration, same seed: byte-identical trace files.
    let algorithm = mwg_step(rwmh(1.8).unwrap(), &["mu_x"]).unwrap()
        >> mwg_step(adaptive_rwmh(1.0).unwrap(), &["mu_y"]).unwrap();
    let initial = mean_position(0.0, 0.0);
    let mut csv = [Vec::new(), Vec::new()];
    for bytes in &mut csv {
        let run = mcmc(500, &algorithm, &target, &initial, &chain_key).unwrap();
        run.samples.write_csv(&mut *bytes).unwrap();
    }
    let deterministic = csv[0] == csv[1] && !csv[0].is_empty();

    // Composition is associative under the fixed key-split convention: both
    // groupings flatten to the same three-child compound.
    let a = || mwg_step(rwmh(0.7).unwrap(), &["mu_x"]).unwrap();
    let b = || mwg_step(adaptive_rwmh(0.9).unwrap(), &["mu_y"]).unwrap();
    let c = || metropolis(0.5).unwrap();
    let left = (a() >> b()) >> c();
    let right = a() >> (b() >> c());
    let mut traces = Vec::new();
    for algorithm in [&left, &right] {
        let run = mcmc(C10_STEPS, algorithm, &target, &initial, &chain_key).unwrap();
        let mut bytes = Vec::new();
        run.samples.write_csv(&mut bytes).unwrap();
        traces.push(bytes);
    }
    let associative = traces[0] == traces[1] && left.arity() == 3 && right.arity() == 3;

    let elapsed = start.elapsed();
    let pass = deterministic && associative && elapsed <= C10_BUDGET;
    report(
        10,
        pass,
        &format!(
            "repeated run byte-identical: {deterministic}; groupings of three kernels \
             agree over {C10_STEPS} steps: {associative}; {:.2?} of {C10_BUDGET:?}",
            elapsed
        ),
    );
}
