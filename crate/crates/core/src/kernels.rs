//! Built-in Metropolis-type kernels.
//!
//! All three kernels are full-space random-walk samplers over real-valued
//! positions; restrict them to a coordinate block with
//! [`mwg_step`](crate::compose::mwg_step). Each step emits an info record
//! with `is_accepted` (0/1), `log_acceptance`, and the proposed coordinates
//! under `proposed.<name>`.
//!
//! * [`metropolis`]: symmetric uniform proposal `x* ~ U(x - tau, x + tau)`.
//! * [`rwmh`]: isotropic Gaussian proposal with a fixed scale.
//! * [`adaptive_rwmh`]: Gaussian proposal whose covariance tracks the chain
//!   history (Haario-style adaptation): isotropic `initial_scale^2 I` for the
//!   first [`ADAPT_WARMUP`] steps, then `(2.38^2 / d) (cov + 1e-6 I)` where
//!   `cov` is the running covariance of all visited (accepted-or-repeated)
//!   positions, maintained by a one-pass recursion.
//!
//! Acceptance always happens in log space: the Bernoulli success probability
//! is `exp(log_acceptance)` clamped to 1, and a proposal outside the support
//! (`-inf` density) is rejected outright.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::prng::RngKey;
use crate::state::{ChainAndKernelState, ChainState, Info, KernelState, Position, Tensor};
use crate::target::TargetLogDensity;

/// Steps of pure `initial_scale` proposals before covariance adaptation
/// kicks in.
pub const ADAPT_WARMUP: usize = 100;

/// Diagonal jitter added to the running covariance before factorization.
pub const COV_JITTER: f64 = 1e-6;

/// Scaling `2.38^2 / d` applied to the adapted covariance.
fn haario_factor(d: usize) -> f64 {
    2.38 * 2.38 / d as f64
}

fn require_real(position: &Position, kernel: &str) -> Result<()> {
    for (name, t) in position.iter() {
        if !matches!(t, Tensor::F64(_)) {
            return Err(Error::InvalidArgument(format!(
                "{kernel} requires a real-valued position, but `{name}` is integer-valued"
            )));
        }
    }
    Ok(())
}

/// Shared Metropolis accept/reject arithmetic.
///
/// Returns the next chain state plus the info fields.
fn mh_select(
    current: &ChainState,
    proposed: Position,
    proposed_log_density: f64,
    acceptance_key: &RngKey,
) -> (ChainState, bool, f64, Position) {
    let log_acceptance = if proposed_log_density == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        proposed_log_density - current.log_density
    };
    let p = if log_acceptance == f64::NEG_INFINITY {
        0.0
    } else {
        log_acceptance.exp().min(1.0)
    };
    let accept = acceptance_key.stream().bernoulli(p);
    let next = if accept {
        ChainState::new(proposed.clone(), proposed_log_density)
    } else {
        current.clone()
    };
    (next, accept, log_acceptance, proposed)
}

fn acceptance_info(
    accepted: bool,
    log_acceptance: f64,
    proposed: &Position,
) -> Result<Info> {
    let mut record = Position::from_pairs([
        ("is_accepted", Tensor::scalar_i64(accepted as i64)),
        ("log_acceptance", Tensor::scalar_f64(log_acceptance)),
    ])?;
    for (name, t) in proposed.iter() {
        record.insert(format!("proposed.{name}"), t.clone())?;
    }
    Ok(Info::Leaf(record))
}

/// Metropolis kernel with a symmetric uniform proposal of half-width `tau`.
///
/// At initialization `tau` is broadcast to the shape of the position, so the
/// kernel state stores one half-width per coordinate. Fails if `tau <= 0`.
pub fn metropolis(tau: f64) -> Result<crate::compose::SamplingAlgorithm> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "metropolis half-width must be positive, got {tau}"
        )));
    }
    let init = move |target: &TargetLogDensity, position: &Position| {
        require_real(position, "metropolis")?;
        let log_density = target.evaluate(position)?;
        // Broadcast the scalar half-width to the position's shape.
        let mut payload = Position::new();
        for (name, t) in position.iter() {
            let full = Tensor::f64_from_vec(t.shape(), vec![tau; t.len()])?;
            payload.insert(name, full)?;
        }
        Ok(ChainAndKernelState::new(
            ChainState::new(position.clone(), log_density),
            KernelState::Leaf(payload),
        ))
    };
    let step = move |target: &TargetLogDensity,
                     state: &ChainAndKernelState,
                     key: &RngKey|
          -> Result<(ChainAndKernelState, Info)> {
        let (proposal_key, acceptance_key) = key.split2();
        let taus = state.kernel.as_leaf()?;
        let mut stream = proposal_key.stream();
        let mut proposed = Position::new();
        for (name, t) in state.chain.position.iter() {
            let x = t.as_f64_array()?;
            let h = taus.expect(name)?.as_f64_array()?;
            let out: Vec<f64> = x
                .iter()
                .zip(h.iter())
                .map(|(&xi, &hi)| xi + stream.uniform_in(-hi, hi))
                .collect();
            proposed.insert(name, Tensor::f64_from_vec(t.shape(), out)?)?;
        }
        let proposed_lp = target.evaluate(&proposed)?;
        let (chain, accepted, log_acceptance, proposed) =
            mh_select(&state.chain, proposed, proposed_lp, &acceptance_key);
        let info = acceptance_info(accepted, log_acceptance, &proposed)?;
        Ok((
            ChainAndKernelState::new(chain, state.kernel.clone()),
            info,
        ))
    };
    Ok(crate::compose::SamplingAlgorithm::from_fns(init, step))
}

/// Random-walk Metropolis-Hastings with isotropic Gaussian proposals of
/// standard deviation `scale`. Fails if `scale <= 0`.
pub fn rwmh(scale: f64) -> Result<crate::compose::SamplingAlgorithm> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rwmh scale must be positive, got {scale}"
        )));
    }
    let init = move |target: &TargetLogDensity, position: &Position| {
        require_real(position, "rwmh")?;
        let log_density = target.evaluate(position)?;
        let payload = Position::from_pairs([("scale", Tensor::scalar_f64(scale))])?;
        Ok(ChainAndKernelState::new(
            ChainState::new(position.clone(), log_density),
            KernelState::Leaf(payload),
        ))
    };
    let step = move |target: &TargetLogDensity,
                     state: &ChainAndKernelState,
                     key: &RngKey|
          -> Result<(ChainAndKernelState, Info)> {
        let (proposal_key, acceptance_key) = key.split2();
        let s = state
            .kernel
            .as_leaf()?
            .expect("scale")?
            .as_scalar_f64()?;
        let mut stream = proposal_key.stream();
        let flat = state.chain.position.flatten_f64()?;
        let moved: Vec<f64> = flat
            .iter()
            .map(|&x| x + s * stream.standard_normal())
            .collect();
        let proposed = state.chain.position.unflatten_f64_like(&moved)?;
        let proposed_lp = target.evaluate(&proposed)?;
        let (chain, accepted, log_acceptance, proposed) =
            mh_select(&state.chain, proposed, proposed_lp, &acceptance_key);
        let info = acceptance_info(accepted, log_acceptance, &proposed)?;
        Ok((
            ChainAndKernelState::new(chain, state.kernel.clone()),
            info,
        ))
    };
    Ok(crate::compose::SamplingAlgorithm::from_fns(init, step))
}

struct AdaptiveState {
    step_count: i64,
    running_mean: DVector<f64>,
    running_cov: DMatrix<f64>,
    base_scale: f64,
}

impl AdaptiveState {
    fn unpack(payload: &Position, d: usize) -> Result<AdaptiveState> {
        let step_count = payload.expect("step_count")?.as_scalar_i64()?;
        let mean = payload.expect("running_mean")?.as_f64_array()?;
        let cov = payload.expect("running_cov")?.as_f64_array()?;
        let base_scale = payload.expect("base_scale")?.as_scalar_f64()?;
        if mean.len() != d || cov.len() != d * d {
            return Err(Error::StructureMismatch(format!(
                "adaptive state is sized for {} coordinates, position has {d}",
                mean.len()
            )));
        }
        Ok(AdaptiveState {
            step_count,
            running_mean: DVector::from_iterator(d, mean.iter().copied()),
            running_cov: DMatrix::from_iterator(d, d, cov.iter().copied()),
            base_scale,
        })
    }

    fn pack(&self) -> Result<Position> {
        let d = self.running_mean.len();
        Position::from_pairs([
            ("step_count", Tensor::scalar_i64(self.step_count)),
            (
                "running_mean",
                Tensor::f64_from_vec(&[d], self.running_mean.iter().copied().collect())?,
            ),
            (
                "running_cov",
                // DMatrix iterates column-major; the matrix stays symmetric
                // up to roundoff, but transpose first so the tensor is
                // row-major exactly.
                Tensor::f64_from_vec(
                    &[d, d],
                    self.running_cov.transpose().iter().copied().collect(),
                )?,
            ),
            ("base_scale", Tensor::scalar_f64(self.base_scale)),
        ])
    }

    /// One-pass mean/covariance update with the realized position `x`.
    ///
    /// With `n` previous updates: `mean' = mean + (x - mean) / (n + 1)` and
    /// `cov' = cov + ((x - mean)(x - mean')^T - cov) / (n + 1)`, which keeps
    /// `cov` equal to the population covariance (1/n normalization) of all
    /// updates so far.
    fn update(&mut self, x: &DVector<f64>) {
        let n1 = (self.step_count + 1) as f64;
        let old_mean = self.running_mean.clone();
        self.running_mean = &old_mean + (x - &old_mean) / n1;
        let outer = (x - &old_mean) * (x - &self.running_mean).transpose();
        self.running_cov = &self.running_cov + (outer - &self.running_cov) / n1;
        self.step_count += 1;
    }
}

/// Adaptive random-walk Metropolis (Haario-style covariance adaptation).
///
/// Proposals are isotropic `N(0, initial_scale^2 I)` for the first
/// [`ADAPT_WARMUP`] steps; afterwards the proposal covariance is
/// `(2.38^2 / d) (running_cov + 1e-6 I)`. The running moments are updated
/// with the realized (accepted-or-repeated) position after every step, so
/// the adaptation diminishes as the chain grows. Fails if
/// `initial_scale <= 0`.
pub fn adaptive_rwmh(initial_scale: f64) -> Result<crate::compose::SamplingAlgorithm> {
    if !(initial_scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "adaptive_rwmh initial scale must be positive, got {initial_scale}"
        )));
    }
    let init = move |target: &TargetLogDensity, position: &Position| {
        require_real(position, "adaptive_rwmh")?;
        let log_density = target.evaluate(position)?;
        let d = position.flat_len();
        if d == 0 {
            return Err(Error::InvalidArgument(
                "adaptive_rwmh requires a non-empty position".into(),
            ));
        }
        let payload = AdaptiveState {
            step_count: 0,
            running_mean: DVector::zeros(d),
            running_cov: DMatrix::zeros(d, d),
            base_scale: initial_scale,
        }
        .pack()?;
        Ok(ChainAndKernelState::new(
            ChainState::new(position.clone(), log_density),
            KernelState::Leaf(payload),
        ))
    };
    let step = move |target: &TargetLogDensity,
                     state: &ChainAndKernelState,
                     key: &RngKey|
          -> Result<(ChainAndKernelState, Info)> {
        let (proposal_key, acceptance_key) = key.split2();
        let flat = state.chain.position.flatten_f64()?;
        let d = flat.len();
        let mut adaptive = AdaptiveState::unpack(state.kernel.as_leaf()?, d)?;
        let x = DVector::from_vec(flat);

        let mut stream = proposal_key.stream();
        let z = DVector::from_iterator(d, (0..d).map(|_| stream.standard_normal()));
        let moved = if (adaptive.step_count as usize) < ADAPT_WARMUP {
            &x + adaptive.base_scale * z
        } else {
            // Symmetrize against roundoff drift, add jitter, and factorize.
            let sym = (&adaptive.running_cov + adaptive.running_cov.transpose()) * 0.5;
            let prop_cov =
                (sym + DMatrix::identity(d, d) * COV_JITTER) * haario_factor(d);
            let chol = Cholesky::new(prop_cov).ok_or_else(|| {
                Error::InvalidArgument(
                    "adaptive proposal covariance is not positive definite".into(),
                )
            })?;
            &x + chol.l() * z
        };
        let proposed = state
            .chain
            .position
            .unflatten_f64_like(moved.as_slice())?;
        let proposed_lp = target.evaluate(&proposed)?;
        let (chain, accepted, log_acceptance, proposed) =
            mh_select(&state.chain, proposed, proposed_lp, &acceptance_key);

        // Adapt on the realized position (new draw or repeated point).
        let realized = DVector::from_vec(chain.position.flatten_f64()?);
        adaptive.update(&realized);

        let info = acceptance_info(accepted, log_acceptance, &proposed)?;
        Ok((
            ChainAndKernelState::new(chain, KernelState::Leaf(adaptive.pack()?)),
            info,
        ))
    };
    Ok(crate::compose::SamplingAlgorithm::from_fns(init, step))
}
