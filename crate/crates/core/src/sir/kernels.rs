//! Latent-event Metropolis kernels and the full compound algorithm.
//!
//! Both kernels operate on a position holding exactly one entry, `events`,
//! and are meant to be lifted over the joint space with
//! [`mwg_step`](crate::compose::mwg_step). They propose integer edits to the
//! latent infection slice and accept in log space with the exact proposal
//! asymmetry corrections; the observed removal slice is never touched.
//!
//! Proposal corrections work on event *counts* (states), not labeled
//! events: picking "one event uniformly" from a cell holding `c` events
//! selects that cell with probability proportional to `c`, so the
//! forward/reverse proposal ratio carries the cell multiplicities. The
//! enumeration tests at the bottom of this file hold the kernels to the
//! exact stationary distribution.

use ndarray::Ix3;

use crate::compose::{multi_scan, mwg_step, SamplingAlgorithm};
use crate::error::{Error, Result};
use crate::kernels::adaptive_rwmh;
use crate::prng::RngKey;
use crate::state::{ChainAndKernelState, ChainState, Info, KernelState, Position, Tensor};
use crate::target::TargetLogDensity;

use super::model::{EventTensor, MetaPopConfig, SI};

/// Latent-event sweeps per parameter update in [`build_sir_mwg`].
pub const INNER_SCANS: usize = 20;

fn expect_events(position: &Position, t_max: usize, m: usize) -> Result<EventTensor> {
    if position.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "event kernels operate on exactly the `events` entry, got {}",
            position.describe()
        )));
    }
    let tensor = position.expect("events")?;
    let events = tensor
        .as_i64_array()?
        .view()
        .into_dimensionality::<Ix3>()
        .map_err(|_| {
            Error::StructureMismatch(format!(
                "events tensor must be rank 3, got shape {:?}",
                tensor.shape()
            ))
        })?;
    if events.dim() != (t_max, m, 2) {
        return Err(Error::StructureMismatch(format!(
            "events tensor has shape {:?}, expected ({t_max}, {m}, 2)",
            events.dim()
        )));
    }
    Ok(events.to_owned())
}

fn events_position(events: EventTensor) -> Position {
    let mut p = Position::new();
    p.insert("events", Tensor::I64(events.into_dyn()))
        .expect("single entry cannot collide");
    p
}

fn init_events_kernel(
    t_max: usize,
    m: usize,
) -> impl Fn(&TargetLogDensity, &Position) -> Result<ChainAndKernelState> + Send + Sync {
    move |target: &TargetLogDensity, position: &Position| {
        expect_events(position, t_max, m)?;
        let lp = target.evaluate(position)?;
        Ok(ChainAndKernelState::new(
            ChainState::new(position.clone(), lp),
            KernelState::Leaf(Position::new()),
        ))
    }
}

/// Shared accept/reject arithmetic; `log_acceptance` already includes the
/// proposal correction.
fn select(
    state: &ChainAndKernelState,
    proposed: Position,
    proposed_lp: f64,
    log_acceptance: f64,
    acceptance_key: &RngKey,
) -> (ChainAndKernelState, bool) {
    let p = if log_acceptance == f64::NEG_INFINITY {
        0.0
    } else {
        log_acceptance.exp().min(1.0)
    };
    if acceptance_key.stream().bernoulli(p) {
        (
            ChainAndKernelState::new(
                ChainState::new(proposed, proposed_lp),
                state.kernel.clone(),
            ),
            true,
        )
    } else {
        (state.clone(), false)
    }
}

fn move_info(accepted: bool, log_acceptance: f64, source: [i64; 2], dest: [i64; 2]) -> Info {
    Info::Leaf(
        Position::from_pairs([
            ("is_accepted", Tensor::scalar_i64(accepted as i64)),
            ("log_acceptance", Tensor::scalar_f64(log_acceptance)),
            (
                "source",
                Tensor::i64_from_vec(&[2], source.to_vec()).expect("static shape"),
            ),
            (
                "destination",
                Tensor::i64_from_vec(&[2], dest.to_vec()).expect("static shape"),
            ),
        ])
        .expect("static names"),
    )
}

/// Kernel that relocates one latent infection to a different time block.
///
/// Per step: pick one existing infection event uniformly (cells weighted by
/// their counts), pick a destination block uniformly among the other
/// `T - 1` blocks of the same population, and move it. The MH correction is
/// `ln(count at destination after) - ln(count at source before)`. With no
/// infection events (or a single time block) the step is a no-op rejection
/// with `[-1, -1]` sentinels in the info record.
pub fn move_event_kernel(config: &MetaPopConfig) -> SamplingAlgorithm {
    let (t_max, m) = (config.num_times, config.num_pops);
    let step = move |target: &TargetLogDensity,
                     state: &ChainAndKernelState,
                     key: &RngKey|
          -> Result<(ChainAndKernelState, Info)> {
        let (proposal_key, acceptance_key) = key.split2();
        let events = expect_events(&state.chain.position, t_max, m)?;
        let n_total: i64 = (0..t_max)
            .flat_map(|t| (0..m).map(move |i| (t, i)))
            .map(|(t, i)| events[(t, i, SI)])
            .sum();
        if n_total == 0 || t_max < 2 {
            let info = move_info(false, f64::NEG_INFINITY, [-1, -1], [-1, -1]);
            return Ok((state.clone(), info));
        }
        let mut stream = proposal_key.stream();
        // Uniform over events = cells weighted by multiplicity.
        let mut remaining = stream.integer_uniform(0, n_total);
        let (mut t_src, mut pop) = (0usize, 0usize);
        'outer: for t in 0..t_max {
            for i in 0..m {
                remaining -= events[(t, i, SI)];
                if remaining < 0 {
                    t_src = t;
                    pop = i;
                    break 'outer;
                }
            }
        }
        let offset = stream.integer_uniform(0, (t_max - 1) as i64) as usize;
        let t_dst = if offset >= t_src { offset + 1 } else { offset };

        let count_src_before = events[(t_src, pop, SI)];
        let mut proposed = events.clone();
        proposed[(t_src, pop, SI)] -= 1;
        proposed[(t_dst, pop, SI)] += 1;
        let count_dst_after = proposed[(t_dst, pop, SI)];
        let proposed_position = events_position(proposed);
        let proposed_lp = target.evaluate(&proposed_position)?;
        let log_acceptance = if proposed_lp == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            proposed_lp - state.chain.log_density + (count_dst_after as f64).ln()
                - (count_src_before as f64).ln()
        };
        let (next, accepted) = select(
            state,
            proposed_position,
            proposed_lp,
            log_acceptance,
            &acceptance_key,
        );
        let info = move_info(
            accepted,
            log_acceptance,
            [t_src as i64, pop as i64],
            [t_dst as i64, pop as i64],
        );
        Ok((next, info))
    };
    SamplingAlgorithm::from_fns(init_events_kernel(t_max, m), step)
}

fn init_cond_info(
    accepted: bool,
    log_acceptance: f64,
    kind: i64,
    cell: [i64; 2],
    noop: bool,
) -> Info {
    Info::Leaf(
        Position::from_pairs([
            ("is_accepted", Tensor::scalar_i64(accepted as i64)),
            ("log_acceptance", Tensor::scalar_f64(log_acceptance)),
            ("kind", Tensor::scalar_i64(kind)),
            (
                "cell",
                Tensor::i64_from_vec(&[2], cell.to_vec()).expect("static shape"),
            ),
            ("noop_delete", Tensor::scalar_i64(noop as i64)),
        ])
        .expect("static names"),
    )
}

/// Kernel that adds or deletes a latent infection in the leading
/// `init_window` blocks — perturbing how the epidemic was seeded.
///
/// Per step, a fair coin picks add (kind 0) or delete (kind 1). Add draws a
/// `(block, population)` cell uniformly from the window and increments it;
/// delete picks one existing window event uniformly (multiplicity-weighted)
/// and decrements its cell. The MH corrections account for the asymmetry:
/// `ln(c + 1) - ln(n_win + 1) + ln(W m)` for an add onto a cell holding `c`
/// events with `n_win` events in the window, and the mirror image for a
/// delete. Deleting with an empty window is a no-op rejection flagged
/// `noop_delete`.
pub fn initial_conditions_kernel(config: &MetaPopConfig) -> SamplingAlgorithm {
    let (t_max, m, window) = (config.num_times, config.num_pops, config.init_window);
    let step = move |target: &TargetLogDensity,
                     state: &ChainAndKernelState,
                     key: &RngKey|
          -> Result<(ChainAndKernelState, Info)> {
        let (proposal_key, acceptance_key) = key.split2();
        let events = expect_events(&state.chain.position, t_max, m)?;
        let mut stream = proposal_key.stream();
        let n_window: i64 = (0..window)
            .flat_map(|t| (0..m).map(move |i| (t, i)))
            .map(|(t, i)| events[(t, i, SI)])
            .sum();
        let cells = (window * m) as f64;

        let add = stream.bernoulli(0.5);
        let (proposed, log_correction, kind, cell) = if add {
            let c = stream.integer_uniform(0, (window * m) as i64) as usize;
            let (t, i) = (c / m, c % m);
            let count = events[(t, i, SI)];
            let mut proposed = events.clone();
            proposed[(t, i, SI)] += 1;
            let corr = ((count + 1) as f64).ln() - ((n_window + 1) as f64).ln() + cells.ln();
            (proposed, corr, 0i64, [t as i64, i as i64])
        } else {
            if n_window == 0 {
                let info =
                    init_cond_info(false, f64::NEG_INFINITY, 1, [-1, -1], true);
                return Ok((state.clone(), info));
            }
            let mut remaining = stream.integer_uniform(0, n_window);
            let (mut t_del, mut pop) = (0usize, 0usize);
            'outer: for t in 0..window {
                for i in 0..m {
                    remaining -= events[(t, i, SI)];
                    if remaining < 0 {
                        t_del = t;
                        pop = i;
                        break 'outer;
                    }
                }
            }
            let count = events[(t_del, pop, SI)];
            let mut proposed = events.clone();
            proposed[(t_del, pop, SI)] -= 1;
            let corr = (n_window as f64).ln() - (count as f64).ln() - cells.ln();
            (proposed, corr, 1i64, [t_del as i64, pop as i64])
        };

        let proposed_position = events_position(proposed);
        let proposed_lp = target.evaluate(&proposed_position)?;
        let log_acceptance = if proposed_lp == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            proposed_lp - state.chain.log_density + log_correction
        };
        let (next, accepted) = select(
            state,
            proposed_position,
            proposed_lp,
            log_acceptance,
            &acceptance_key,
        );
        Ok((
            next,
            init_cond_info(accepted, log_acceptance, kind, cell, false),
        ))
    };
    SamplingAlgorithm::from_fns(init_events_kernel(t_max, m), step)
}

/// The full Metropolis-within-Gibbs algorithm over `{beta1, beta2, events}`:
/// one adaptive random-walk update of the (log-scale) infection parameters,
/// then [`INNER_SCANS`] sweeps of move-infection followed by
/// add/delete-in-window.
pub fn build_sir_mwg(
    config: &MetaPopConfig,
    param_kernel_scale: f64,
) -> Result<SamplingAlgorithm> {
    config.validate()?;
    let params = mwg_step(adaptive_rwmh(param_kernel_scale)?, &["beta1", "beta2"])?;
    let sweep = mwg_step(move_event_kernel(config), &["events"])?
        >> mwg_step(initial_conditions_kernel(config), &["events"])?;
    Ok(params >> multi_scan(INNER_SCANS, sweep)?)
}
