//! Kernel composition.
//!
//! A [`SamplingAlgorithm`] is a pair of pure functions: `init` builds the
//! full chain-and-kernel state from an initial position, and `step` maps
//! `(target, state, key) -> (state, info)`. Because steps are pure values,
//! algorithms compose like functions:
//!
//! * [`then`](SamplingAlgorithm::then) (also spelled `>>`) runs two
//!   algorithms in sequence. The chain position flows through both; each
//!   child keeps its own private kernel state; the per-step infos of all
//!   children are collected into one flat ordered sequence. Chained `then`s
//!   flatten into a single composite, which makes composition associative
//!   not just in distribution but observably: `(a >> b) >> c` and
//!   `a >> (b >> c)` build the *same* composite, with the same key-splitting
//!   and the same state/info structure.
//! * [`mwg_step`] lifts an algorithm over a subset of coordinates into one
//!   over the full space, turning a joint target into the exact conditional
//!   on the fly (Metropolis-within-Gibbs).
//! * [`multi_scan`] repeats an algorithm `n` times per outer step.
//!
//! Keys are never shared: a composite of `k` children splits its incoming
//! key into `k` sub-keys left-to-right; `multi_scan(n, ..)` splits into `n`.
//!
//! Every algorithm preserves *structure constancy*: the position names and
//! shapes, the kernel-state tree, and the info tree all have the same
//! structure after every step. The driver checks this invariant.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::prng::RngKey;
use crate::state::{ChainAndKernelState, ChainState, Info, KernelState, Position};
use crate::target::TargetLogDensity;

type InitFn =
    dyn Fn(&TargetLogDensity, &Position) -> Result<ChainAndKernelState> + Send + Sync;
type StepFn = dyn Fn(&TargetLogDensity, &ChainAndKernelState, &RngKey) -> Result<(ChainAndKernelState, Info)>
    + Send
    + Sync;

struct AtomicAlg {
    init: Box<InitFn>,
    step: Box<StepFn>,
}

#[derive(Clone)]
enum AlgKind {
    Atomic(Arc<AtomicAlg>),
    /// Flattened `then`-chain; elements are never themselves `Composite`.
    Composite(Vec<SamplingAlgorithm>),
}

/// A transition kernel as a pure `(init, step)` pair.
///
/// Cloning is cheap (shared function objects). See the module docs for the
/// composition calculus.
#[derive(Clone)]
pub struct SamplingAlgorithm {
    kind: AlgKind,
}

impl SamplingAlgorithm {
    /// Wraps raw `init`/`step` functions into an algorithm.
    ///
    /// `init` must return the user-supplied position unchanged as the chain
    /// position; `step` must preserve state structure. Composition relies on
    /// both properties.
    pub fn from_fns<I, S>(init: I, step: S) -> SamplingAlgorithm
    where
        I: Fn(&TargetLogDensity, &Position) -> Result<ChainAndKernelState> + Send + Sync + 'static,
        S: Fn(&TargetLogDensity, &ChainAndKernelState, &RngKey) -> Result<(ChainAndKernelState, Info)>
            + Send
            + Sync
            + 'static,
    {
        SamplingAlgorithm {
            kind: AlgKind::Atomic(Arc::new(AtomicAlg {
                init: Box::new(init),
                step: Box::new(step),
            })),
        }
    }

    /// Builds the initial chain-and-kernel state at `position`.
    ///
    /// For a composite, every child is initialized with the same position
    /// (they must agree on the resulting chain state because init never
    /// moves the chain); the kernel states are collected in order.
    pub fn init(
        &self,
        target: &TargetLogDensity,
        position: &Position,
    ) -> Result<ChainAndKernelState> {
        match &self.kind {
            AlgKind::Atomic(a) => (a.init)(target, position),
            AlgKind::Composite(children) => {
                let mut kernel_states = Vec::with_capacity(children.len());
                let mut chain: Option<ChainState> = None;
                for child in children {
                    let st = child.init(target, position)?;
                    kernel_states.push(st.kernel);
                    chain = Some(st.chain);
                }
                Ok(ChainAndKernelState::new(
                    chain.expect("composites have at least two children"),
                    KernelState::Seq(kernel_states),
                ))
            }
        }
    }

    /// Advances the chain by one step.
    ///
    /// A composite splits `key` into one sub-key per child, threads the
    /// chain state through the children left-to-right, keeps each child's
    /// kernel state private, and returns the ordered sequence of child
    /// infos.
    pub fn step(
        &self,
        target: &TargetLogDensity,
        state: &ChainAndKernelState,
        key: &RngKey,
    ) -> Result<(ChainAndKernelState, Info)> {
        match &self.kind {
            AlgKind::Atomic(a) => (a.step)(target, state, key),
            AlgKind::Composite(children) => {
                let kernel_states = state.kernel.as_seq()?;
                if kernel_states.len() != children.len() {
                    return Err(Error::StructureMismatch(format!(
                        "composite has {} children but kernel state has {} entries",
                        children.len(),
                        kernel_states.len()
                    )));
                }
                let keys = key.split(children.len())?;
                let mut chain = state.chain.clone();
                let mut new_kernel_states = Vec::with_capacity(children.len());
                let mut infos = Vec::with_capacity(children.len());
                for ((child, child_kernel), child_key) in
                    children.iter().zip(kernel_states).zip(&keys)
                {
                    let child_state =
                        ChainAndKernelState::new(chain, child_kernel.clone());
                    let (next, info) = child.step(target, &child_state, child_key)?;
                    chain = next.chain;
                    new_kernel_states.push(next.kernel);
                    infos.push(info);
                }
                Ok((
                    ChainAndKernelState::new(chain, KernelState::Seq(new_kernel_states)),
                    Info::Seq(infos),
                ))
            }
        }
    }

    /// Sequential composition; `a.then(b)` is also available as `a >> b`.
    ///
    /// Flattens nested compositions: the children of `a` followed by the
    /// children of `b` become one composite.
    pub fn then(self, other: SamplingAlgorithm) -> SamplingAlgorithm {
        let mut children = match self.kind {
            AlgKind::Composite(c) => c,
            AlgKind::Atomic(_) => vec![self],
        };
        match other.kind {
            AlgKind::Composite(c) => children.extend(c),
            AlgKind::Atomic(_) => children.push(other),
        }
        SamplingAlgorithm {
            kind: AlgKind::Composite(children),
        }
    }

    /// Number of top-level children (1 for a primitive algorithm).
    pub fn arity(&self) -> usize {
        match &self.kind {
            AlgKind::Atomic(_) => 1,
            AlgKind::Composite(c) => c.len(),
        }
    }
}

impl std::ops::Shr for SamplingAlgorithm {
    type Output = SamplingAlgorithm;

    fn shr(self, rhs: SamplingAlgorithm) -> SamplingAlgorithm {
        self.then(rhs)
    }
}

impl std::fmt::Debug for SamplingAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            AlgKind::Atomic(_) => write!(f, "SamplingAlgorithm(primitive)"),
            AlgKind::Composite(c) => write!(f, "SamplingAlgorithm(composite, {} children)", c.len()),
        }
    }
}

/// Lifts `child` over the coordinates `target_names` into an algorithm over
/// the full space (one Metropolis-within-Gibbs block).
///
/// Each step projects the global position onto `(local, remainder)`, builds
/// the exact conditional target by fixing the remainder, recomputes the
/// child's cached local log-density under that conditional (the cache from
/// the previous step is stale whenever another block moved), runs the child,
/// and writes the updated local coordinates back into the global position.
/// The child's info passes through unchanged; untargeted coordinates are
/// never touched, bit for bit.
///
/// Construction fails on an empty or duplicated name list; a name missing
/// from the global position surfaces as an error when the algorithm is
/// initialized or stepped.
pub fn mwg_step(
    child: SamplingAlgorithm,
    target_names: &[&str],
) -> Result<SamplingAlgorithm> {
    if target_names.is_empty() {
        return Err(Error::InvalidArgument(
            "mwg_step requires at least one target name".into(),
        ));
    }
    let mut seen = std::collections::HashSet::new();
    for &n in target_names {
        if !seen.insert(n) {
            return Err(Error::DuplicateName(n.into()));
        }
    }
    let names: Arc<Vec<String>> = Arc::new(target_names.iter().map(|s| s.to_string()).collect());

    let init_child = child.clone();
    let init_names = Arc::clone(&names);
    let init = move |target: &TargetLogDensity, position: &Position| {
        let name_refs: Vec<&str> = init_names.iter().map(|s| s.as_str()).collect();
        let (local, remainder) = position.project(&name_refs)?;
        let conditional = target.condition(&remainder)?;
        let child_state = init_child.init(&conditional, &local)?;
        // The conditional's value at the local point *is* the joint value at
        // the global point, so the cached log-density transfers exactly.
        Ok(ChainAndKernelState::new(
            ChainState::new(position.clone(), child_state.chain.log_density),
            child_state.kernel,
        ))
    };

    let step_names = names;
    let step = move |target: &TargetLogDensity,
                     state: &ChainAndKernelState,
                     key: &RngKey|
          -> Result<(ChainAndKernelState, Info)> {
        let name_refs: Vec<&str> = step_names.iter().map(|s| s.as_str()).collect();
        let (local, remainder) = state.chain.position.project(&name_refs)?;
        let conditional = target.condition(&remainder)?;
        // Refresh the local cache: other blocks may have moved since this
        // block last ran, so the previous local log-density is stale.
        let local_log_density = conditional.evaluate(&local)?;
        let local_state = ChainAndKernelState::new(
            ChainState::new(local, local_log_density),
            state.kernel.clone(),
        );
        let (local_next, info) = child.step(&conditional, &local_state, key)?;
        let global_position = state
            .chain
            .position
            .replace_values(&local_next.chain.position)?;
        Ok((
            ChainAndKernelState::new(
                ChainState::new(global_position, local_next.chain.log_density),
                local_next.kernel,
            ),
            info,
        ))
    };

    Ok(SamplingAlgorithm::from_fns(init, step))
}

/// Repeats `inner` `n` times per outer step.
///
/// The outer key splits into `n` sub-keys, one per inner application. The
/// kernel state is the inner algorithm's; the reported info is the info of
/// the last inner application (so the info structure stays constant).
pub fn multi_scan(n: usize, inner: SamplingAlgorithm) -> Result<SamplingAlgorithm> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "multi_scan requires at least one application".into(),
        ));
    }
    let init_inner = inner.clone();
    let init = move |target: &TargetLogDensity, position: &Position| init_inner.init(target, position);
    let step = move |target: &TargetLogDensity,
                     state: &ChainAndKernelState,
                     key: &RngKey|
          -> Result<(ChainAndKernelState, Info)> {
        let keys = key.split(n)?;
        let mut current = state.clone();
        let mut last_info = None;
        for sub_key in &keys {
            let (next, info) = inner.step(target, &current, sub_key)?;
            current = next;
            last_info = Some(info);
        }
        Ok((current, last_info.expect("n >= 1")))
    };
    Ok(SamplingAlgorithm::from_fns(init, step))
}
