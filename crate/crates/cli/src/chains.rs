//! Runs one or more independent chains of the same algorithm.
//!
//! Chain `i` draws its per-iteration keys from `chain_root.fold_in(i)`, so
//! adding chains never perturbs existing ones: chain 0 of a four-chain run
//! is bitwise identical to a single-chain run at the same seed.

use mwg_core::driver::{mcmc, McmcRun};
use mwg_core::{Position, RngKey, SamplingAlgorithm, TargetLogDensity};

use crate::CliError;

pub fn run_chains(
    num_chains: usize,
    num_samples: usize,
    algorithm: &SamplingAlgorithm,
    target: &TargetLogDensity,
    initial: &Position,
    chain_root: &RngKey,
) -> Result<Vec<McmcRun>, CliError> {
    let to_runtime = |e: mwg_core::Error| CliError::Runtime(e.to_string());
    if num_chains == 1 {
        let run = mcmc(
            num_samples,
            algorithm,
            target,
            initial,
            &chain_root.fold_in(0),
        )
        .map_err(to_runtime)?;
        return Ok(vec![run]);
    }
    let results: Vec<mwg_core::Result<McmcRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..num_chains)
            .map(|i| {
                let key = chain_root.fold_in(i as u64);
                scope.spawn(move || mcmc(num_samples, algorithm, target, initial, &key))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain worker panicked"))
            .collect()
    });
    results.into_iter().map(|r| r.map_err(to_runtime)).collect()
}
