//! Discrete-time meta-population SIR model with data augmentation.
//!
//! The model tracks `m` populations over `T` unit time blocks. Within each
//! block, susceptibles are infected with a per-susceptible probability
//! derived from the local and cross-population infection pressure, and
//! infected individuals recover with a fixed known rate. Both transition
//! counts are binomial draws, so the likelihood of a complete event history
//! is a product of binomial probability masses — exact enough to enumerate
//! on tiny instances, which is how this module is tested.
//!
//! The inference problem treats the recovery events as observed data and the
//! infection events as latent. [`model::SirModel`] owns the bookkeeping
//! (simulation, feasibility, log-density); [`kernels`] provides the two
//! latent-event Metropolis kernels (move an infection between time blocks;
//! add or delete an early infection) and [`kernels::build_sir_mwg`], the
//! full Metropolis-within-Gibbs algorithm over `{beta1, beta2, events}`.

pub mod kernels;
pub mod model;

pub use kernels::{build_sir_mwg, initial_conditions_kernel, move_event_kernel, INNER_SCANS};
pub use model::{
    events_from_tensor, events_to_tensor, initial_latent_events, reference_scenario, si_hazard,
    simulate, sir_position, sir_target, state_trajectory, EpiParams, EventTensor, InitialState,
    MetaPopConfig, SirModel, IR, SI,
};
