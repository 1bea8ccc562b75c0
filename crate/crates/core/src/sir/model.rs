//! Model bookkeeping: configuration, simulation, feasibility, log-density.

use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView3, Ix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prng::RngKey;
use crate::state::{Position, Tensor, TensorSpec};
use crate::target::TargetLogDensity;

/// Transition index of latent infections (S→I) in an event tensor.
pub const SI: usize = 0;
/// Transition index of observed removals (I→R) in an event tensor.
pub const IR: usize = 1;

/// Rate of the exponential prior placed on each infection parameter
/// (natural scale); weakly informative over several orders of magnitude.
pub const BETA_PRIOR_RATE: f64 = 1e-3;

/// Event counts laid out time × population × transition, with transition
/// [`SI`] = latent infections and [`IR`] = observed removals.
pub type EventTensor = Array3<i64>;

/// Static description of the meta-population process.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MetaPopConfig {
    /// Number of populations `m`.
    pub num_pops: usize,
    /// Population sizes, one per population.
    pub population: Vec<i64>,
    /// `m × m` cross-population contact weights (row i: pressure felt by
    /// population i from each source population).
    pub connectivity: Vec<Vec<f64>>,
    /// Known removal rate (per unit time).
    pub gamma: f64,
    /// Number of unit time blocks `T`.
    pub num_times: usize,
    /// Block length.
    pub delta_t: f64,
    /// Number of leading blocks the add/delete kernel may edit.
    pub init_window: usize,
}

impl MetaPopConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.num_pops;
        if m == 0 {
            return Err(Error::InvalidArgument("need at least one population".into()));
        }
        if self.population.len() != m {
            return Err(Error::InvalidArgument(format!(
                "expected {m} population sizes, got {}",
                self.population.len()
            )));
        }
        if self.population.iter().any(|&n| n < 1) {
            return Err(Error::InvalidArgument(
                "population sizes must be positive".into(),
            ));
        }
        if self.connectivity.len() != m
            || self.connectivity.iter().any(|row| row.len() != m)
        {
            return Err(Error::InvalidArgument(format!(
                "connectivity must be {m}x{m}"
            )));
        }
        if self
            .connectivity
            .iter()
            .flatten()
            .any(|c| !c.is_finite() || *c < 0.0)
        {
            return Err(Error::InvalidArgument(
                "connectivity entries must be finite and non-negative".into(),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument("gamma must be positive".into()));
        }
        if self.num_times == 0 {
            return Err(Error::InvalidArgument("need at least one time block".into()));
        }
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return Err(Error::InvalidArgument("delta_t must be positive".into()));
        }
        if self.init_window == 0 || self.init_window > self.num_times {
            return Err(Error::InvalidArgument(format!(
                "init_window must be in 1..={}, got {}",
                self.num_times, self.init_window
            )));
        }
        Ok(())
    }
}

/// Infection parameters on the natural (positive) scale.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EpiParams {
    /// Within-population transmission parameter.
    pub beta1: f64,
    /// Cross-population transmission parameter.
    pub beta2: f64,
}

/// Compartment occupancy (S, I, R) per population at time zero.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub x0: Vec<[i64; 3]>,
}

impl InitialState {
    pub fn validate(&self, config: &MetaPopConfig) -> Result<()> {
        if self.x0.len() != config.num_pops {
            return Err(Error::InvalidArgument(format!(
                "expected {} initial rows, got {}",
                config.num_pops,
                self.x0.len()
            )));
        }
        for (i, row) in self.x0.iter().enumerate() {
            if row.iter().any(|&v| v < 0) {
                return Err(Error::InvalidArgument(format!(
                    "initial state for population {i} has a negative compartment"
                )));
            }
            let total: i64 = row.iter().sum();
            if total != config.population[i] {
                return Err(Error::InvalidArgument(format!(
                    "initial state for population {i} sums to {total}, expected {}",
                    config.population[i]
                )));
            }
        }
        Ok(())
    }
}

/// The model with its derived tables: validated configuration, initial
/// state, and a log-factorial table for binomial coefficients.
#[derive(Debug, Clone)]
pub struct SirModel {
    config: MetaPopConfig,
    x0: Array2<i64>,
    ln_fact: Vec<f64>,
    /// Removal probability per block, `1 - exp(-gamma * delta_t)`.
    q: f64,
    ln_q: f64,
    /// `ln(1 - q)`, computed exactly as `-gamma * delta_t`.
    ln_1mq: f64,
}

impl SirModel {
    pub fn new(config: MetaPopConfig, initial: &InitialState) -> Result<SirModel> {
        config.validate()?;
        initial.validate(&config)?;
        let m = config.num_pops;
        let x0 = Array2::from_shape_fn((m, 3), |(i, c)| initial.x0[i][c]);
        let max_n = *config.population.iter().max().expect("validated m >= 1") as usize;
        let mut ln_fact = vec![0.0; max_n + 1];
        for k in 1..=max_n {
            ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
        }
        let ln_1mq = -config.gamma * config.delta_t;
        let q = -ln_1mq.exp_m1();
        Ok(SirModel {
            config,
            x0,
            ln_fact,
            q,
            ln_q: q.ln(),
            ln_1mq,
        })
    }

    pub fn config(&self) -> &MetaPopConfig {
        &self.config
    }

    pub fn initial_state(&self) -> &Array2<i64> {
        &self.x0
    }

    /// Removal probability per block.
    pub fn removal_probability(&self) -> f64 {
        self.q
    }

    /// Per-susceptible infection hazard for each population, given the
    /// current infected counts: local pressure `beta1 * I_i / N_i` plus
    /// connectivity-weighted pressure from every population.
    fn hazards(&self, params: &EpiParams, infected: &[i64]) -> Vec<f64> {
        let m = self.config.num_pops;
        // Infected fractions are shared by every destination row.
        let frac: Vec<f64> = (0..m)
            .map(|j| infected[j] as f64 / self.config.population[j] as f64)
            .collect();
        (0..m)
            .map(|i| {
                let mut h = params.beta1 * frac[i];
                for j in 0..m {
                    h += params.beta2 * self.config.connectivity[i][j] * frac[j];
                }
                h
            })
            .collect()
    }

    /// Per-susceptible infection probabilities `1 - exp(-h * delta_t)`.
    pub fn si_probabilities(&self, params: &EpiParams, infected: &[i64]) -> Vec<f64> {
        self.hazards(params, infected)
            .into_iter()
            .map(|h| -(-h * self.config.delta_t).exp_m1())
            .collect()
    }

    /// Draws a complete event history by chain-binomial sampling: per block,
    /// per population, an infection count from `Binomial(S, p_i)` then a
    /// removal count from `Binomial(I, q)`. Feasible by construction and
    /// deterministic in the key.
    pub fn simulate(&self, params: &EpiParams, key: &RngKey) -> EventTensor {
        let (t_max, m) = (self.config.num_times, self.config.num_pops);
        let mut events = Array3::zeros((t_max, m, 2));
        let mut s: Vec<i64> = (0..m).map(|i| self.x0[(i, 0)]).collect();
        let mut infected: Vec<i64> = (0..m).map(|i| self.x0[(i, 1)]).collect();
        let mut stream = key.stream();
        for t in 0..t_max {
            let p = self.si_probabilities(params, &infected);
            for i in 0..m {
                let y_si = stream.binomial(s[i] as u64, p[i]) as i64;
                let y_ir = stream.binomial(infected[i] as u64, self.q) as i64;
                events[(t, i, SI)] = y_si;
                events[(t, i, IR)] = y_ir;
                s[i] -= y_si;
                infected[i] += y_si - y_ir;
            }
        }
        events
    }

    /// Runs the compartment bookkeeping implied by an event history.
    ///
    /// Returns the `(T+1) × m × 3` occupancy array, or `None` for an
    /// infeasible history (not an error): a negative count, a block claiming
    /// more transitions than the source compartment holds, or infections in
    /// a population under zero infection pressure (nobody infected locally
    /// or in any connected population) — the last case has likelihood zero
    /// for every positive parameter value. Errors only on a shape mismatch.
    pub fn state_trajectory(&self, events: ArrayView3<i64>) -> Result<Option<Array3<i64>>> {
        let (t_max, m) = (self.config.num_times, self.config.num_pops);
        if events.dim() != (t_max, m, 2) {
            return Err(Error::InvalidArgument(format!(
                "event tensor has shape {:?}, expected ({t_max}, {m}, 2)",
                events.dim()
            )));
        }
        let mut traj = Array3::zeros((t_max + 1, m, 3));
        for i in 0..m {
            for c in 0..3 {
                traj[(0, i, c)] = self.x0[(i, c)];
            }
        }
        for t in 0..t_max {
            for i in 0..m {
                let y_si = events[(t, i, SI)];
                let y_ir = events[(t, i, IR)];
                let s = traj[(t, i, 0)];
                let inf = traj[(t, i, 1)];
                if y_si < 0 || y_ir < 0 || y_si > s || y_ir > inf {
                    return Ok(None);
                }
                if y_si > 0 {
                    let pressure = inf > 0
                        || (0..m).any(|j| {
                            self.config.connectivity[i][j] > 0.0 && traj[(t, j, 1)] > 0
                        });
                    if !pressure {
                        return Ok(None);
                    }
                }
                traj[(t + 1, i, 0)] = s - y_si;
                traj[(t + 1, i, 1)] = inf + y_si - y_ir;
                traj[(t + 1, i, 2)] = traj[(t, i, 2)] + y_ir;
            }
        }
        Ok(Some(traj))
    }

    fn ln_choose(&self, n: i64, k: i64) -> f64 {
        self.ln_fact[n as usize] - self.ln_fact[k as usize] - self.ln_fact[(n - k) as usize]
    }

    /// Log of `Binomial(n, p)` mass at `k`, where the success probability is
    /// `1 - exp(-h * delta_t)`; using the hazard directly keeps
    /// `ln(1 - p)` exact even when `p` is within rounding of 1.
    fn ln_binom_hazard(&self, k: i64, n: i64, hazard: f64) -> f64 {
        debug_assert!((0..=n).contains(&k));
        if hazard <= 0.0 {
            return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        let ln_1mp = -hazard * self.config.delta_t;
        let p = -ln_1mp.exp_m1();
        self.ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * ln_1mp
    }

    fn ln_binom_removal(&self, k: i64, n: i64) -> f64 {
        debug_assert!((0..=n).contains(&k));
        self.ln_choose(n, k) + k as f64 * self.ln_q + (n - k) as f64 * self.ln_1mq
    }

    /// Log-likelihood of a complete event history: the product of binomial
    /// masses over every block and population. Negative infinity for
    /// infeasible histories or parameters outside the positive quadrant.
    pub fn log_likelihood(&self, params: &EpiParams, events: ArrayView3<i64>) -> f64 {
        if !(params.beta1 > 0.0) || !(params.beta2 > 0.0) {
            return f64::NEG_INFINITY;
        }
        let (t_max, m) = (self.config.num_times, self.config.num_pops);
        debug_assert_eq!(events.dim(), (t_max, m, 2));
        let mut s: Vec<i64> = (0..m).map(|i| self.x0[(i, 0)]).collect();
        let mut infected: Vec<i64> = (0..m).map(|i| self.x0[(i, 1)]).collect();
        let mut total = 0.0;
        for t in 0..t_max {
            let hazards = self.hazards(params, &infected);
            for i in 0..m {
                let y_si = events[(t, i, SI)];
                let y_ir = events[(t, i, IR)];
                if y_si < 0 || y_ir < 0 || y_si > s[i] || y_ir > infected[i] {
                    return f64::NEG_INFINITY;
                }
                total += self.ln_binom_hazard(y_si, s[i], hazards[i]);
                total += self.ln_binom_removal(y_ir, infected[i]);
                s[i] -= y_si;
                infected[i] += y_si - y_ir;
            }
        }
        total
    }

    /// Independent exponential log-priors on the natural-scale parameters.
    pub fn log_prior(&self, params: &EpiParams) -> f64 {
        let one = |b: f64| {
            if b > 0.0 {
                BETA_PRIOR_RATE.ln() - BETA_PRIOR_RATE * b
            } else {
                f64::NEG_INFINITY
            }
        };
        one(params.beta1) + one(params.beta2)
    }

    /// Joint log-density of parameters and events: likelihood plus priors.
    pub fn log_density(&self, params: &EpiParams, events: ArrayView3<i64>) -> f64 {
        let prior = self.log_prior(params);
        if prior == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        prior + self.log_likelihood(params, events)
    }
}

/// Spec-shaped convenience wrappers over [`SirModel`].
pub fn si_hazard(
    config: &MetaPopConfig,
    params: &EpiParams,
    state: &Array2<i64>,
) -> Result<Vec<f64>> {
    let initial = InitialState {
        x0: (0..state.nrows())
            .map(|i| [state[(i, 0)], state[(i, 1)], state[(i, 2)]])
            .collect(),
    };
    let model = SirModel::new(config.clone(), &initial)?;
    let infected: Vec<i64> = (0..state.nrows()).map(|i| state[(i, 1)]).collect();
    Ok(model.si_probabilities(params, &infected))
}

pub fn simulate(
    config: &MetaPopConfig,
    params: &EpiParams,
    initial: &InitialState,
    key: &RngKey,
) -> Result<EventTensor> {
    Ok(SirModel::new(config.clone(), initial)?.simulate(params, key))
}

pub fn state_trajectory(
    config: &MetaPopConfig,
    initial: &InitialState,
    events: &EventTensor,
) -> Result<Option<Array3<i64>>> {
    SirModel::new(config.clone(), initial)?.state_trajectory(events.view())
}

pub fn log_density(
    config: &MetaPopConfig,
    params: &EpiParams,
    initial: &InitialState,
    events: &EventTensor,
) -> Result<f64> {
    Ok(SirModel::new(config.clone(), initial)?.log_density(params, events.view()))
}

/// Wraps an event tensor as a position entry value.
pub fn events_to_tensor(events: &EventTensor) -> Tensor {
    Tensor::I64(events.clone().into_dyn())
}

/// Recovers the typed event tensor from a position entry.
pub fn events_from_tensor(tensor: &Tensor) -> Result<EventTensor> {
    tensor
        .as_i64_array()?
        .clone()
        .into_dimensionality::<Ix3>()
        .map_err(|_| {
            Error::StructureMismatch(format!(
                "events tensor must be rank 3, got shape {:?}",
                tensor.shape()
            ))
        })
}

/// Assembles the sampling position `{beta1, beta2, events}`. The parameter
/// entries hold **log-scale** values so the samplers roam an unconstrained
/// space.
pub fn sir_position(log_beta1: f64, log_beta2: f64, events: &EventTensor) -> Result<Position> {
    Position::from_pairs([
        ("beta1", Tensor::scalar_f64(log_beta1)),
        ("beta2", Tensor::scalar_f64(log_beta2)),
        ("events", events_to_tensor(events)),
    ])
}

/// Joint target over `{beta1, beta2, events}`.
///
/// The parameter entries are log-scale, so the target folds in the change
/// of variables: `log_likelihood(exp b) + log_prior(exp b) + b1 + b2`.
pub fn sir_target(model: &Arc<SirModel>) -> TargetLogDensity {
    let m = Arc::clone(model);
    let shape = [
        model.config().num_times,
        model.config().num_pops,
        2usize,
    ];
    TargetLogDensity::new(
        vec![
            ("beta1".into(), TensorSpec::scalar_f64()),
            ("beta2".into(), TensorSpec::scalar_f64()),
            ("events".into(), TensorSpec::i64(&shape)),
        ],
        move |position: &Position| {
            let b1 = position
                .get("beta1")
                .and_then(|t| t.as_scalar_f64().ok())
                .expect("declared structure");
            let b2 = position
                .get("beta2")
                .and_then(|t| t.as_scalar_f64().ok())
                .expect("declared structure");
            let events = position
                .get("events")
                .and_then(|t| t.as_i64_array().ok())
                .expect("declared structure");
            let view = events
                .view()
                .into_dimensionality::<Ix3>()
                .expect("declared structure");
            let params = EpiParams {
                beta1: b1.exp(),
                beta2: b2.exp(),
            };
            m.log_density(&params, view) + b1 + b2
        },
    )
    .expect("static names are valid")
}

/// Builds a feasible event history from observed removals alone: the
/// removal slice is copied verbatim and latent infections are inserted as
/// early as infection pressure and susceptible capacity allow, so every
/// removal has someone to remove and no infection appears without an
/// infectious source. Errors if the construction finds no feasible history.
pub fn initial_latent_events(
    model: &SirModel,
    observed_removals: &Array2<i64>,
) -> Result<EventTensor> {
    let (t_max, m) = (model.config().num_times, model.config().num_pops);
    if observed_removals.dim() != (t_max, m) {
        return Err(Error::InvalidArgument(format!(
            "removal array has shape {:?}, expected ({t_max}, {m})",
            observed_removals.dim()
        )));
    }
    if observed_removals.iter().any(|&y| y < 0) {
        return Err(Error::InvalidArgument(
            "observed removal counts must be non-negative".into(),
        ));
    }
    let mut events: EventTensor = Array3::zeros((t_max, m, 2));
    for t in 0..t_max {
        for i in 0..m {
            events[(t, i, IR)] = observed_removals[(t, i)];
        }
    }
    let infeasible = |t: usize, i: usize| {
        Error::InvalidArgument(format!(
            "no feasible infection history: removals for population {i} at \
             block {t} exceed what any placement of infections can supply"
        ))
    };
    // Each pass walks the joint bookkeeping to the first removal deficit,
    // then seeds extra infections for that population at the earliest block
    // that has both spare susceptibles and an infectious source. Every pass
    // adds at least one event, so the loop is bounded by the total capacity.
    loop {
        let mut s_hist = Array2::zeros((t_max, m));
        let mut i_hist = Array2::zeros((t_max, m));
        let mut s: Vec<i64> = (0..m).map(|i| model.initial_state()[(i, 0)]).collect();
        let mut infected: Vec<i64> =
            (0..m).map(|i| model.initial_state()[(i, 1)]).collect();
        let mut deficit: Option<(usize, usize, i64)> = None;
        'walk: for t in 0..t_max {
            for i in 0..m {
                s_hist[(t, i)] = s[i];
                i_hist[(t, i)] = infected[i];
            }
            for i in 0..m {
                let y_si = events[(t, i, SI)];
                let y_ir = events[(t, i, IR)];
                if y_si > s[i] {
                    // An earlier fix-up starved a later block of susceptibles.
                    return Err(infeasible(t, i));
                }
                if y_ir > infected[i] {
                    deficit = Some((t, i, y_ir - infected[i]));
                    break 'walk;
                }
                s[i] -= y_si;
                infected[i] += y_si - y_ir;
            }
        }
        let Some((t, i, need)) = deficit else { break };
        if t == 0 {
            return Err(Error::InvalidArgument(format!(
                "population {i} observes more removals at block 0 than initially infected"
            )));
        }
        let mut remaining = need;
        for u in 0..t {
            if remaining == 0 {
                break;
            }
            let pressured = i_hist[(u, i)] > 0
                || (0..m).any(|j| {
                    model.config().connectivity[i][j] > 0.0 && i_hist[(u, j)] > 0
                });
            if !pressured {
                continue;
            }
            let spare = s_hist[(u, i)] - events[(u, i, SI)];
            let add = remaining.min(spare);
            events[(u, i, SI)] += add;
            remaining -= add;
        }
        if remaining == need {
            // Nowhere to seed even one infection before the deficit.
            return Err(infeasible(t, i));
        }
        // A partial placement re-walks: the new infections may unlock
        // pressure (and capacity bookkeeping) for the rest.
    }
    match model.state_trajectory(events.view())? {
        Some(_) => Ok(events),
        None => Err(Error::InvalidArgument(
            "no feasible infection history for the observed removals".into(),
        )),
    }
}

/// Reference scenario shared by the command-line experiments and the
/// end-to-end checks: three populations of 200, coupled weakly and
/// symmetrically over fifty observation blocks, seeded only in
/// population 0, with transmission rates `(0.4, 0.15)` used when
/// simulating data. Because the outbreak must travel through the coupling
/// to reach populations 1 and 2, their epidemics lag the seed population,
/// which separates within-population pressure from cross-population
/// pressure in the likelihood and keeps both rates identifiable.
pub fn reference_scenario() -> (MetaPopConfig, EpiParams, InitialState) {
    let config = MetaPopConfig {
        num_pops: 3,
        population: vec![200, 200, 200],
        connectivity: vec![
            vec![0.0, 0.2, 0.2],
            vec![0.2, 0.0, 0.2],
            vec![0.2, 0.2, 0.0],
        ],
        gamma: 0.3,
        num_times: 50,
        delta_t: 1.0,
        init_window: 12,
    };
    let params = EpiParams {
        beta1: 0.4,
        beta2: 0.15,
    };
    let initial = InitialState {
        x0: vec![[195, 5, 0], [200, 0, 0], [200, 0, 0]],
    };
    (config, params, initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sir::enumeration;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{Binomial, Discrete};

    fn one_pop_config(n: i64, t_max: usize) -> MetaPopConfig {
        MetaPopConfig {
            num_pops: 1,
            population: vec![n],
            connectivity: vec![vec![0.0]],
            gamma: 0.1,
            num_times: t_max,
            delta_t: 1.0,
            init_window: t_max.min(12),
        }
    }

    fn tiny_model() -> SirModel {
        // The enumeration workhorse: one population of 4, two blocks.
        let config = one_pop_config(4, 2);
        let initial = InitialState { x0: vec![[3, 1, 0]] };
        SirModel::new(config, &initial).unwrap()
    }

    fn events_from_layout(layout: &[Vec<[i64; 2]>]) -> EventTensor {
        let t_max = layout.len();
        let m = layout[0].len();
        Array3::from_shape_fn((t_max, m, 2), |(t, i, k)| layout[t][i][k])
    }

    #[test]
    fn config_validation_catches_bad_shapes() {
        let mut config = one_pop_config(4, 2);
        assert!(config.validate().is_ok());
        config.init_window = 3;
        assert!(config.validate().is_err());
        let mut config = one_pop_config(4, 2);
        config.connectivity = vec![vec![0.0, 1.0]];
        assert!(config.validate().is_err());
        let mut config = one_pop_config(4, 2);
        config.gamma = 0.0;
        assert!(config.validate().is_err());
        let mut config = one_pop_config(4, 2);
        config.population = vec![0];
        assert!(config.validate().is_err());
    }

    #[test]
    fn initial_state_rows_must_sum_to_population() {
        let config = one_pop_config(4, 2);
        assert!(InitialState { x0: vec![[3, 1, 0]] }.validate(&config).is_ok());
        assert!(InitialState { x0: vec![[3, 2, 0]] }.validate(&config).is_err());
        assert!(InitialState { x0: vec![[5, -1, 0]] }.validate(&config).is_err());
    }

    #[test]
    fn no_infecteds_means_no_infection_pressure() {
        let config = one_pop_config(100, 1);
        let params = EpiParams { beta1: 2.0, beta2: 1.0 };
        let state = Array2::from_shape_vec((1, 3), vec![100, 0, 0]).unwrap();
        let p = si_hazard(&config, &params, &state).unwrap();
        assert_eq!(p, vec![0.0]);
    }

    #[test]
    fn hazard_of_ln_two_halves_the_susceptibles() {
        // beta1 * I/N = ln 2 with delta_t = 1 gives p = 1/2 exactly.
        let config = one_pop_config(10, 1);
        let params = EpiParams {
            beta1: (2.0f64).ln() * 10.0 / 4.0,
            beta2: 0.7, // C = 0, so this cannot matter
        };
        let state = Array2::from_shape_vec((1, 3), vec![6, 4, 0]).unwrap();
        let p = si_hazard(&config, &params, &state).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn hazard_matches_a_scalar_loop_on_three_populations() {
        let config = MetaPopConfig {
            num_pops: 3,
            population: vec![120, 340, 75],
            connectivity: vec![
                vec![0.0, 0.5, 0.2],
                vec![0.5, 0.0, 0.9],
                vec![0.2, 0.9, 0.0],
            ],
            gamma: 0.1,
            num_times: 1,
            delta_t: 0.5,
            init_window: 1,
        };
        let params = EpiParams { beta1: 0.31, beta2: 0.17 };
        let state =
            Array2::from_shape_vec((3, 3), vec![100, 15, 5, 300, 40, 0, 70, 2, 3]).unwrap();
        let got = si_hazard(&config, &params, &state).unwrap();
        for i in 0..3 {
            let mut h = params.beta1 * state[(i, 1)] as f64 / config.population[i] as f64;
            for j in 0..3 {
                h += params.beta2 * config.connectivity[i][j] * state[(j, 1)] as f64
                    / config.population[j] as f64;
            }
            let expected = 1.0 - (-h * config.delta_t).exp();
            assert_abs_diff_eq!(got[i], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_betas_generate_no_infections() {
        let config = one_pop_config(50, 20);
        let initial = InitialState { x0: vec![[45, 5, 0]] };
        let params = EpiParams { beta1: 1e-300, beta2: 1e-300 };
        let events = simulate(&config, &params, &initial, &RngKey::from_seed(7)).unwrap();
        for t in 0..20 {
            assert_eq!(events[(t, 0, SI)], 0);
        }
    }

    #[test]
    fn simulation_is_deterministic_and_feasible_with_conservation() {
        let config = MetaPopConfig {
            num_pops: 2,
            population: vec![80, 60],
            connectivity: vec![vec![0.0, 0.4], vec![0.4, 0.0]],
            gamma: 0.1,
            num_times: 25,
            delta_t: 1.0,
            init_window: 12,
        };
        let initial = InitialState { x0: vec![[79, 1, 0], [60, 0, 0]] };
        let params = EpiParams { beta1: 0.4, beta2: 0.1 };
        let key = RngKey::from_seed(11);
        let a = simulate(&config, &params, &initial, &key).unwrap();
        let b = simulate(&config, &params, &initial, &key).unwrap();
        assert_eq!(a, b);
        let traj = state_trajectory(&config, &initial, &a).unwrap().unwrap();
        for t in 0..=25 {
            for i in 0..2 {
                let total: i64 = (0..3).map(|c| traj[(t, i, c)]).sum();
                assert_eq!(total, config.population[i]);
                assert!((0..3).all(|c| traj[(t, i, c)] >= 0));
            }
        }
    }

    #[test]
    fn trajectory_of_zero_events_is_constant_and_overdraws_are_infeasible() {
        let config = one_pop_config(10, 3);
        let initial = InitialState { x0: vec![[7, 3, 0]] };
        let zero: EventTensor = Array3::zeros((3, 1, 2));
        let traj = state_trajectory(&config, &initial, &zero).unwrap().unwrap();
        for t in 0..=3 {
            assert_eq!(
                [traj[(t, 0, 0)], traj[(t, 0, 1)], traj[(t, 0, 2)]],
                [7, 3, 0]
            );
        }
        // Remove more than are infected: infeasible, not an error.
        let mut bad = zero.clone();
        bad[(0, 0, IR)] = 4;
        assert!(state_trajectory(&config, &initial, &bad).unwrap().is_none());
        let mut negative = zero.clone();
        negative[(1, 0, SI)] = -1;
        assert!(state_trajectory(&config, &initial, &negative)
            .unwrap()
            .is_none());
        // Wrong shape is an error, not a marker.
        let misshapen: EventTensor = Array3::zeros((2, 1, 2));
        assert!(state_trajectory(&config, &initial, &misshapen).is_err());
    }

    #[test]
    fn single_block_likelihood_matches_closed_form_binomials() {
        let config = one_pop_config(15, 1);
        let initial = InitialState { x0: vec![[10, 5, 0]] };
        let model = SirModel::new(config.clone(), &initial).unwrap();
        let params = EpiParams { beta1: 0.8, beta2: 0.3 };
        let p = model.si_probabilities(&params, &[5])[0];
        let q = model.removal_probability();
        let si = Binomial::new(p, 10).unwrap();
        let ir = Binomial::new(q, 5).unwrap();
        for k in 0..=10i64 {
            for j in 0..=5i64 {
                let mut events: EventTensor = Array3::zeros((1, 1, 2));
                events[(0, 0, SI)] = k;
                events[(0, 0, IR)] = j;
                let got = model.log_likelihood(&params, events.view());
                let expected = si.ln_pmf(k as u64) + ir.ln_pmf(j as u64);
                assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
            }
        }
    }

    /// The keystone correctness test: on an instance small enough to
    /// enumerate, the likelihood must be a genuine probability mass
    /// function over complete event histories.
    #[test]
    fn likelihood_sums_to_one_over_all_histories() {
        let model = tiny_model();
        let params = EpiParams { beta1: 0.9, beta2: 0.4 };
        let layouts = enumeration::all_event_layouts(model.config(), 4);
        assert_eq!(layouts.len(), 5usize.pow(4));
        let mut total = 0.0;
        let mut feasible = 0;
        for layout in &layouts {
            let events = events_from_layout(layout);
            let lp = model.log_likelihood(&params, events.view());
            if lp > f64::NEG_INFINITY {
                feasible += 1;
                total += lp.exp();
            }
        }
        assert!(feasible > 10, "enumeration found too few feasible histories");
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn likelihood_matches_the_independent_oracle_on_every_history() {
        let model = tiny_model();
        let params = EpiParams { beta1: 1.3, beta2: 0.2 };
        let x0 = [[3i64, 1, 0]];
        for layout in enumeration::all_event_layouts(model.config(), 4) {
            let events = events_from_layout(&layout);
            let fast = model.log_likelihood(&params, events.view());
            let slow =
                enumeration::oracle_log_likelihood(model.config(), &params, &x0, &layout);
            if fast == f64::NEG_INFINITY || slow == f64::NEG_INFINITY {
                assert_eq!(fast, slow, "feasibility disagreement on {layout:?}");
            } else {
                assert_abs_diff_eq!(fast, slow, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn feasibility_and_finite_likelihood_coincide() {
        let model = tiny_model();
        let params = EpiParams { beta1: 0.5, beta2: 0.5 };
        for layout in enumeration::all_event_layouts(model.config(), 4) {
            let events = events_from_layout(&layout);
            let finite =
                model.log_likelihood(&params, events.view()) > f64::NEG_INFINITY;
            let feasible = model.state_trajectory(events.view()).unwrap().is_some();
            assert_eq!(finite, feasible, "mismatch on {layout:?}");
        }
    }

    #[test]
    fn mean_final_size_matches_an_independent_resimulation() {
        let config = one_pop_config(50, 30);
        let initial = InitialState { x0: vec![[48, 2, 0]] };
        // Transmission strong enough for real outbreaks but weak enough
        // that some die out early — a saturating epidemic would leave no
        // variance to compare against.
        let beta1 = 0.38;
        let params = EpiParams { beta1, beta2: 1e-300 };
        let model = SirModel::new(config.clone(), &initial).unwrap();
        let reps = 200;
        let key = RngKey::from_seed(400);
        let sizes: Vec<f64> = (0..reps)
            .map(|r| {
                let events = model.simulate(&params, &key.fold_in(r));
                (0..30).map(|t| events[(t, 0, SI)]).sum::<i64>() as f64
            })
            .collect();
        // Independent plain-loop re-simulation of the same process.
        let oracle_key = RngKey::from_seed(500);
        let oracle_sizes: Vec<f64> = (0..reps)
            .map(|r| {
                let mut stream = oracle_key.fold_in(r).stream();
                let (mut s, mut inf) = (48i64, 2i64);
                let mut infections = 0i64;
                for _ in 0..30 {
                    let p = 1.0 - (-beta1 * inf as f64 / 50.0).exp();
                    let y_si = stream.binomial(s as u64, p) as i64;
                    let y_ir =
                        stream.binomial(inf as u64, 1.0 - (-0.1f64).exp()) as i64;
                    s -= y_si;
                    inf += y_si - y_ir;
                    infections += y_si;
                }
                infections as f64
            })
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let se = (sd(&sizes).powi(2) / reps as f64 + sd(&oracle_sizes).powi(2) / reps as f64)
            .sqrt();
        let gap = (mean(&sizes) - mean(&oracle_sizes)).abs();
        assert!(gap < 3.0 * se, "gap {gap} vs 3 SE {}", 3.0 * se);
    }

    #[test]
    fn joint_density_adds_priors_and_target_adds_the_jacobian() {
        let model = Arc::new(tiny_model());
        let params = EpiParams { beta1: 0.7, beta2: 0.2 };
        let events = model.simulate(&params, &RngKey::from_seed(9));
        let lik = model.log_likelihood(&params, events.view());
        let expected_prior = 2.0 * BETA_PRIOR_RATE.ln()
            - BETA_PRIOR_RATE * (params.beta1 + params.beta2);
        assert_abs_diff_eq!(
            model.log_density(&params, events.view()),
            lik + expected_prior,
            epsilon = 1e-12
        );
        assert_eq!(
            model.log_density(&EpiParams { beta1: -1.0, beta2: 0.2 }, events.view()),
            f64::NEG_INFINITY
        );
        let target = sir_target(&model);
        let position =
            sir_position(params.beta1.ln(), params.beta2.ln(), &events).unwrap();
        let via_target = target.evaluate(&position).unwrap();
        let expected = model.log_density(&params, events.view())
            + params.beta1.ln()
            + params.beta2.ln();
        assert_abs_diff_eq!(via_target, expected, epsilon = 1e-12);
    }

    #[test]
    fn greedy_initialization_is_feasible_and_keeps_removals() {
        let config = MetaPopConfig {
            num_pops: 2,
            population: vec![100, 100],
            connectivity: vec![vec![0.0, 0.6], vec![0.6, 0.0]],
            gamma: 0.1,
            num_times: 30,
            delta_t: 1.0,
            init_window: 12,
        };
        let initial = InitialState { x0: vec![[99, 1, 0], [100, 0, 0]] };
        let params = EpiParams { beta1: 0.5, beta2: 0.2 };
        let model = SirModel::new(config, &initial).unwrap();
        let truth = model.simulate(&params, &RngKey::from_seed(21));
        let observed =
            Array2::from_shape_fn((30, 2), |(t, i)| truth[(t, i, IR)]);
        let rebuilt = initial_latent_events(&model, &observed).unwrap();
        assert!(model.state_trajectory(rebuilt.view()).unwrap().is_some());
        for t in 0..30 {
            for i in 0..2 {
                assert_eq!(rebuilt[(t, i, IR)], observed[(t, i)]);
            }
        }
        // A removal at block 0 with nobody infected is hopeless.
        let mut impossible = Array2::zeros((30, 2));
        impossible[(0, 1)] = 1;
        assert!(initial_latent_events(&model, &impossible).is_err());
    }

    #[test]
    fn config_round_trips_through_json_and_rejects_unknown_fields() {
        let config = one_pop_config(4, 2);
        let text = serde_json::to_string(&config).unwrap();
        let back: MetaPopConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
        let with_extra = text.replace('}', ",\"surprise\":1}");
        assert!(serde_json::from_str::<MetaPopConfig>(&with_extra).is_err());
    }
}
