//! The sampling loop and run diagnostics.
//!
//! [`mcmc`] repeatedly applies a [`SamplingAlgorithm`]'s step function,
//! writing positions and per-step info records into preallocated traces.
//! Burn-in and thinning are deliberately *not* the driver's business; they
//! are applied post hoc by [`summarize`].
//!
//! Info records are stored column-wise, one trace buffer per leaf of the
//! (structurally constant) info tree, so long runs do not pay a per-step
//! allocation tree. [`McmcRun::info_at`] reassembles the tree for a single
//! iteration when needed.

use std::time::{Duration, Instant};

use crate::compose::SamplingAlgorithm;
use crate::error::{Error, Result};
use crate::prng::RngKey;
use crate::state::{ChainAndKernelState, Info, Position, TraceBuffer};
use crate::target::TargetLogDensity;

/// Shape of an info tree, used to rebuild [`Info`] values from the
/// column-wise leaf traces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InfoLayout {
    Leaf,
    Seq(Vec<InfoLayout>),
}

impl InfoLayout {
    fn of(info: &Info) -> InfoLayout {
        match info {
            Info::Leaf(_) => InfoLayout::Leaf,
            Info::Seq(items) => InfoLayout::Seq(items.iter().map(InfoLayout::of).collect()),
        }
    }

    fn rebuild(&self, leaves: &mut std::vec::IntoIter<Position>) -> Info {
        match self {
            InfoLayout::Leaf => Info::Leaf(leaves.next().expect("layout/leaf count mismatch")),
            InfoLayout::Seq(items) => {
                Info::Seq(items.iter().map(|item| item.rebuild(leaves)).collect())
            }
        }
    }
}

/// Provenance and cost of a completed run.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub seed: RngKey,
    pub num_samples: usize,
    pub wall_time: Duration,
}

/// A completed chain: the position trace, the per-step info traces (one
/// buffer per flattened info leaf, in depth-first order), the final
/// chain-plus-kernel state, and run metadata.
#[derive(Debug, Clone)]
pub struct McmcRun {
    pub samples: TraceBuffer,
    pub info_traces: Vec<TraceBuffer>,
    pub info_layout: InfoLayout,
    pub final_state: ChainAndKernelState,
    pub meta: RunMeta,
}

impl McmcRun {
    /// Reassembles the full info tree recorded at iteration `i`.
    pub fn info_at(&self, i: usize) -> Result<Info> {
        let leaves: Result<Vec<Position>> =
            self.info_traces.iter().map(|t| t.read(i)).collect();
        let mut iter = leaves?.into_iter();
        Ok(self.info_layout.rebuild(&mut iter))
    }
}

/// Runs `algorithm` against `target` for `num_samples` steps.
///
/// Row `i` of the sample trace is the chain position after `i + 1` completed
/// steps; the initial position is never stored as a row. The iteration key
/// is derived as `seed.fold_in(i)`, so key storage is O(1) in the run
/// length and any iteration can be replayed in isolation.
///
/// Errors if the initial position does not match the target's declared
/// structure, if the initial log-density is not finite (the error names the
/// offending position), or if any step changes the structure of the
/// position, kernel state, or info tree.
pub fn mcmc(
    num_samples: usize,
    algorithm: &SamplingAlgorithm,
    target: &TargetLogDensity,
    initial_position: &Position,
    seed: &RngKey,
) -> Result<McmcRun> {
    if num_samples == 0 {
        return Err(Error::InvalidArgument(
            "num_samples must be at least 1".into(),
        ));
    }
    let started = Instant::now();
    let mut state = algorithm.init(target, initial_position)?;
    if !state.chain.log_density.is_finite() {
        return Err(Error::NonFiniteInitialDensity(format!(
            "initial log-density is {} at {}",
            state.chain.log_density,
            initial_position.describe()
        )));
    }
    let mut samples = TraceBuffer::allocate(&state.chain.position, num_samples);
    let mut info_traces: Vec<TraceBuffer> = Vec::new();
    let mut info_layout = InfoLayout::Leaf;
    for i in 0..num_samples {
        let key = seed.fold_in(i as u64);
        let (next, info) = algorithm.step(target, &state, &key)?;
        if !next.kernel.structure_eq(&state.kernel) {
            return Err(Error::StructureMismatch(format!(
                "kernel state changed structure at iteration {i}"
            )));
        }
        samples.write(i, &next.chain.position)?; // enforces position structure
        if i == 0 {
            info_layout = InfoLayout::of(&info);
            info_traces = info
                .leaves()
                .into_iter()
                .map(|leaf| TraceBuffer::allocate(leaf, num_samples))
                .collect();
        } else if InfoLayout::of(&info) != info_layout {
            return Err(Error::StructureMismatch(format!(
                "info tree changed shape at iteration {i}"
            )));
        }
        let leaves = info.leaves();
        if leaves.len() != info_traces.len() {
            return Err(Error::StructureMismatch(format!(
                "info leaf count changed at iteration {i}"
            )));
        }
        for (trace, leaf) in info_traces.iter_mut().zip(leaves) {
            trace.write(i, leaf)?; // enforces leaf structure
        }
        state = next;
    }
    Ok(McmcRun {
        samples,
        info_traces,
        info_layout,
        final_state: state,
        meta: RunMeta {
            seed: *seed,
            num_samples,
            wall_time: started.elapsed(),
        },
    })
}

/// Fraction of accepted steps per kernel, in flattened (depth-first) info
/// order. Every info leaf must carry an `is_accepted` field.
pub fn acceptance_rate(run: &McmcRun) -> Result<Vec<f64>> {
    run.info_traces
        .iter()
        .map(|trace| {
            let flags = trace
                .component("is_accepted", 0)
                .map_err(|_| Error::MissingAcceptanceFlag)?;
            Ok(flags.iter().sum::<f64>() / flags.len() as f64)
        })
        .collect()
}

/// Per-component summary statistics of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// 2.5% / 50% / 97.5% quantiles.
    pub quantiles: [f64; 3],
    pub ess: f64,
}

/// Summarizes the retained rows `[burn_in, num_samples)` of a sample trace:
/// mean, standard deviation (n−1 normalization), the 2.5/50/97.5% quantiles,
/// and the effective sample size per scalar component.
pub fn summarize(run: &McmcRun, burn_in: usize) -> Result<Vec<ComponentSummary>> {
    summarize_trace(&run.samples, burn_in)
}

/// [`summarize`] over a bare trace buffer.
pub fn summarize_trace(trace: &TraceBuffer, burn_in: usize) -> Result<Vec<ComponentSummary>> {
    let n = trace.num_samples();
    if burn_in >= n {
        return Err(Error::OutOfBounds {
            index: burn_in,
            len: n,
        });
    }
    let mut out = Vec::new();
    for (name, flat_index, label) in trace.component_index() {
        let xs = &trace.component(&name, flat_index)?[burn_in..];
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / (xs.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        let mut sorted = xs.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample in trace"));
        let quantiles = [
            quantile(&sorted, 0.025),
            quantile(&sorted, 0.5),
            quantile(&sorted, 0.975),
        ];
        out.push(ComponentSummary {
            name: label,
            mean,
            sd,
            quantiles,
            ess: ess_initial_positive(xs),
        });
    }
    Ok(out)
}

/// Linear-interpolation quantile of an already-sorted slice (the common
/// `h = (n-1)p` convention).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Effective sample size by Geyer's initial positive sequence.
///
/// Sums autocorrelation pairs `rho(2m) + rho(2m+1)` while they stay
/// positive, sets `tau = 2 * sum - 1`, and returns `n / tau` clamped to
/// `(0, n]`. A zero-variance trace has ESS 1 by convention.
pub fn ess_initial_positive(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 1.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let gamma = |k: usize| -> f64 {
        centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let g0 = gamma(0);
    if g0 <= 0.0 {
        return 1.0;
    }
    let mut pair_sum = 0.0;
    let mut m = 0usize;
    loop {
        let k = 2 * m;
        if k + 1 > n - 1 {
            break;
        }
        let pair = (gamma(k) + gamma(k + 1)) / g0;
        if pair <= 0.0 {
            break;
        }
        pair_sum += pair;
        m += 1;
    }
    let tau = 2.0 * pair_sum - 1.0;
    if tau <= 0.0 {
        return n as f64;
    }
    (n as f64 / tau).min(n as f64).max(f64::MIN_POSITIVE)
}

/// Geweke convergence diagnostic: z-score comparing the mean of the first
/// 10% of the trace against the last 50%, with ESS-adjusted standard
/// errors. |z| beyond ~2.6 suggests the split means disagree at the 1%
/// level.
pub fn geweke_z(xs: &[f64]) -> f64 {
    let n = xs.len();
    let head = &xs[..(n / 10).max(1)];
    let tail = &xs[n - n / 2..];
    let seg = |s: &[f64]| -> (f64, f64) {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let var = s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / s.len().max(2) as f64;
        (m, var / ess_initial_positive(s))
    };
    let (m1, v1) = seg(head);
    let (m2, v2) = seg(tail);
    if v1 + v2 == 0.0 {
        return 0.0;
    }
    (m1 - m2) / (v1 + v2).sqrt()
}
