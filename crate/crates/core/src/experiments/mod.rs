//! Monte Carlo checks of the scaling limits, and the constants of the
//! positivity argument.
//!
//! Replicas run in parallel; replica `r` of ladder level `k` draws from
//! stream `(k << 32) | r` of the master seed and results are collected in
//! replica order, so every report is a deterministic function of its inputs.

mod convergence;
mod coupling;
mod epochs;
mod homogenize;
mod positivity;
mod stats;
mod sumlaw;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sim::SimRng;

pub use convergence::{
    fluid_convergence, fluid_convergence_with, tube_radius, ConvergenceRow, ConvergenceSettings,
    ConvergenceTable, Reference,
};
pub use coupling::{coupling_constants, CouplingConstants};
pub use epochs::{epoch_lemma_checks, EpochReport};
pub use homogenize::{homogenization_discrepancy, HomogenizationReport, HomogenizationRow};
pub use positivity::{positivity_experiment, PositivityMode, PositivityReport, PositivityRow};
pub use stats::{linear_fit, quantile, Frequency, Summary};
pub use sumlaw::{sum_law_check, sum_law_check_with, SumLawReport, SumLawRow, SumLawSettings};

fn replica_rng(seed: u64, level: usize, replica: usize) -> SimRng {
    SimRng::for_replica(seed, ((level as u64) << 32) | replica as u64)
}

fn run_replicas<R, F>(replicas: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync + Send,
{
    (0..replicas).into_par_iter().map(f).collect()
}

fn check_ladder(ns: &[u64], replicas: usize) -> Result<()> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::invalid("ns", "need at least one positive scale"));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("ns", "scales must be strictly increasing"));
    }
    if replicas == 0 {
        return Err(Error::invalid("replicas", "must be positive"));
    }
    Ok(())
}

fn check_q0(q0: &[f64], n: usize) -> Result<()> {
    if q0.len() != n {
        return Err(Error::LengthMismatch {
            what: "q0",
            expected: n,
            got: q0.len(),
        });
    }
    if q0.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid("q0", "entries must be finite and nonnegative"));
    }
    Ok(())
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", format!("{horizon} is not a finite nonnegative time")));
    }
    Ok(())
}
