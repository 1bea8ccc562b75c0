//! Composable Markov chain Monte Carlo kernels.
//!
//! This crate treats a sampling algorithm as an explicit value: a pair of
//! pure functions, one that builds the initial chain-plus-kernel state and
//! one that advances it by a single transition. Because steps are
//! deterministic functions of `(target, state, key)`, algorithms can be
//! composed, replayed, and tested bitwise.
//!
//! The building blocks:
//!
//! * [`compose::SamplingAlgorithm`] — the kernel contract, with
//!   [`then`](compose::SamplingAlgorithm::then) (also spelled `>>`) for
//!   sequencing kernels and collecting each one's diagnostics.
//! * [`compose::mwg_step`] — lifts a kernel over a subset of coordinates
//!   into a kernel over the full space by conditioning the target on the
//!   untouched remainder (Metropolis-within-Gibbs).
//! * [`compose::multi_scan`] — repeats a kernel a fixed number of times per
//!   outer step.
//! * [`kernels`] — built-in random-walk kernels: [`kernels::metropolis`],
//!   [`kernels::rwmh`], and the covariance-adapting
//!   [`kernels::adaptive_rwmh`].
//! * [`prng::RngKey`] — a splittable counter-based random key, so every
//!   step's randomness is a pure function of its key and independent keys
//!   can be handed to sub-kernels without coordination.
//! * [`state`] — named tensor positions, kernel state, and per-step info
//!   records with a stable tree structure.
//! * [`target::TargetLogDensity`] — a named, conditionable log-density.
//!
//! Driving a composed kernel by hand takes a few lines:
//!
//! ```
//! use mwg_core::compose::mwg_step;
//! use mwg_core::kernels::rwmh;
//! use mwg_core::prng::RngKey;
//! use mwg_core::target::{
//!     gaussian_mean_target, mean_position, simulate_gaussian_data, GaussianModelSpec,
//! };
//!
//! let spec = GaussianModelSpec { num_points: 50, ..Default::default() };
//! let data = simulate_gaussian_data(&spec, &RngKey::from_seed(1)).unwrap();
//! let target = gaussian_mean_target(&spec, &data).unwrap();
//!
//! // Alternate single-coordinate random-walk updates.
//! let alg = mwg_step(rwmh(0.5).unwrap(), &["mu_x"]).unwrap()
//!     >> mwg_step(rwmh(0.5).unwrap(), &["mu_y"]).unwrap();
//!
//! let key = RngKey::from_seed(2);
//! let mut state = alg.init(&target, &mean_position(0.0, 0.0)).unwrap();
//! for i in 0..100 {
//!     let (next, _info) = alg.step(&target, &state, &key.fold_in(i)).unwrap();
//!     state = next;
//! }
//! assert!(state.chain.log_density.is_finite());
//! ```

pub mod compose;
pub mod driver;
pub mod error;
pub mod kernels;
pub mod prng;
pub mod sir;
pub mod state;
pub mod target;

pub use compose::{multi_scan, mwg_step, SamplingAlgorithm};
pub use error::{Error, Result};
pub use prng::RngKey;
pub use state::{ChainAndKernelState, ChainState, Info, KernelState, Position, Tensor};
pub use target::TargetLogDensity;
