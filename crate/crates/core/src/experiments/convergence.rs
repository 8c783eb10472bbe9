use serde::Serialize;

use super::{check_horizon, check_ladder, check_q0, replica_rng, run_replicas, Frequency, Summary};
use crate::error::{Error, Result};
use crate::fluid::{solve_complete, solve_general};
use crate::sim::{run, Dynamics, NetworkState, Observer};
use crate::Params;

/// Fluid path the scaled process is compared to.
pub enum Reference<'a> {
    /// Solved numerically: complete graphs use the boundary-aware solver.
    Fluid,
    /// A known closed form.
    Given(&'a (dyn Fn(f64) -> Vec<f64> + Sync)),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSettings {
    /// Spacing of the comparison grid in scaled time.
    pub grid_step: f64,
    /// Tube radius for the exit frequency; defaults to [`tube_radius`].
    pub tube_radius: Option<f64>,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        ConvergenceSettings {
            grid_step: 1e-3,
            tube_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub replicas: usize,
    pub median_sup_error: f64,
    pub p90_sup_error: f64,
    pub sup_error: Summary,
    pub horizon: f64,
    pub tube_exit: Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub reference: &'static str,
    pub grid_step: f64,
    pub tube_radius: f64,
    /// `2 a beta`; the general-graph limit theorem assumes it is below 1.
    pub two_a_beta: f64,
    pub hypothesis_warning: bool,
}

impl ConvergenceTable {
    pub fn medians(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.median_sup_error).collect()
    }
}

/// Default tube radius `min(C-, C+/3)` for the box `C- = eps/3`,
/// `C+ = 3 max q*`, with `eps` half the smallest coordinate of the reference
/// over the horizon; 0.1 when the reference touches 0.
pub fn tube_radius(values: &[Vec<f64>]) -> f64 {
    let lo = values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().flatten().copied().fold(0.0, f64::max);
    if lo > 0.0 {
        (0.5 * lo / 3.0).min(hi)
    } else {
        0.1
    }
}

pub fn fluid_convergence(
    params: &Params,
    q0: &[f64],
    ns: &[u64],
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<ConvergenceTable> {
    fluid_convergence_with(
        params,
        q0,
        ns,
        horizon,
        replicas,
        seed,
        Reference::Fluid,
        &ConvergenceSettings::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn fluid_convergence_with(
    params: &Params,
    q0: &[f64],
    ns: &[u64],
    horizon: f64,
    replicas: usize,
    seed: u64,
    reference: Reference<'_>,
    settings: &ConvergenceSettings,
) -> Result<ConvergenceTable> {
    check_ladder(ns, replicas)?;
    check_q0(q0, params.node_count())?;
    check_horizon(horizon)?;
    if !(settings.grid_step > 0.0) {
        return Err(Error::invalid("grid_step", "must be positive"));
    }
    let complete = params.graph().is_complete();
    if !complete && q0.iter().any(|&x| x <= 0.0) {
        return Err(Error::invalid(
            "q0",
            "the general-graph limit needs a strictly positive start",
        ));
    }
    let intervals = ((horizon / settings.grid_step - 1e-9).ceil() as usize).max(1);
    let times: Vec<f64> = (0..=intervals)
        .map(|k| horizon * k as f64 / intervals as f64)
        .collect();
    let (values, label) = match reference {
        Reference::Given(f) => (times.iter().map(|&t| f(t)).collect::<Vec<_>>(), "given"),
        Reference::Fluid => {
            let (sol, label) = if complete {
                (solve_complete(params, q0, horizon)?, "complete-graph fluid solution")
            } else {
                let sol = solve_general(params, q0, horizon)?;
                if sol.exit_time <= horizon {
                    return Err(Error::HorizonPastExit {
                        horizon,
                        exit_time: sol.exit_time,
                    });
                }
                (sol, "fluid solution")
            };
            (times.iter().map(|&t| sol.at(t)).collect(), label)
        }
    };
    let radius = settings.tube_radius.unwrap_or_else(|| tube_radius(&values));
    let two_a_beta = 2.0 * params.a() * params.beta();

    let mut rows = Vec::with_capacity(ns.len());
    for (level, &n) in ns.iter().enumerate() {
        let initial = NetworkState::from_fluid(q0, n);
        let errors = run_replicas(replicas, |r| {
            let mut rng = replica_rng(seed, level, r);
            let mut obs = SupError::new(n as f64, &times, &values);
            run(params, &initial, n as f64 * horizon, Dynamics::Full, &mut rng, &mut obs)?;
            Ok(obs.sup)
        })?;
        let summary = Summary::of(&errors);
        rows.push(ConvergenceRow {
            n,
            replicas,
            median_sup_error: summary.median,
            p90_sup_error: summary.p90,
            sup_error: summary,
            horizon,
            tube_exit: Frequency::of(errors.iter().map(|&e| e > radius)),
        });
    }
    Ok(ConvergenceTable {
        rows,
        reference: label,
        grid_step: horizon / intervals as f64,
        tube_radius: radius,
        two_a_beta,
        hypothesis_warning: !complete && two_a_beta >= 1.0,
    })
}

/// Sup over a scaled grid of the max-norm distance between `Q/N` and a reference.
struct SupError<'a> {
    n: f64,
    times: &'a [f64],
    reference: &'a [Vec<f64>],
    next: usize,
    sup: f64,
}

impl<'a> SupError<'a> {
    fn new(n: f64, times: &'a [f64], reference: &'a [Vec<f64>]) -> Self {
        SupError {
            n,
            times,
            reference,
            next: 0,
            sup: 0.0,
        }
    }

    fn record(&mut self, state: &NetworkState) {
        let r = &self.reference[self.next];
        let d = state
            .q
            .iter()
            .zip(r)
            .map(|(&q, &x)| (q as f64 / self.n - x).abs())
            .fold(0.0, f64::max);
        self.sup = self.sup.max(d);
        self.next += 1;
    }
}

impl Observer for SupError<'_> {
    fn hold(&mut self, _from: f64, to: f64, state: &NetworkState) {
        while self.next < self.times.len() && self.n * self.times[self.next] < to {
            self.record(state);
        }
    }

    fn finish(&mut self, time: f64, state: &NetworkState) {
        while self.next < self.times.len() && self.n * self.times[self.next] <= time * (1.0 + 1e-12) {
            self.record(state);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::InterferenceGraph;
    use std::sync::Arc;

    fn complete2(l: f64) -> Params {
        Params::new(Arc::new(InterferenceGraph::complete(2).unwrap()), vec![l, l], 0.25).unwrap()
    }

    #[test]
    fn reproducible_and_shaped() {
        let p = complete2(0.3);
        let a = fluid_convergence(&p, &[1.0, 1.0], &[20, 40], 1.0, 8, 5).unwrap();
        let b = fluid_convergence(&p, &[1.0, 1.0], &[20, 40], 1.0, 8, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 2);
        for r in &a.rows {
            assert_eq!(r.replicas, 8);
            assert_eq!(r.sup_error.count, 8);
            assert!(r.median_sup_error >= 0.0);
            assert!((0.0..=1.0).contains(&r.tube_exit.value));
        }
    }

    #[test]
    fn general_graph_horizon_must_precede_exit() {
        let p = Params::new(Arc::new(InterferenceGraph::cycle(4).unwrap()), vec![0.2; 4], 0.25).unwrap();
        let err = fluid_convergence(&p, &[0.5; 4], &[10], 10.0, 2, 0).unwrap_err();
        assert!(matches!(err, Error::HorizonPastExit { .. }));
        assert!(fluid_convergence(&p, &[0.5, 0.0, 0.5, 0.5], &[10], 0.5, 2, 0).is_err());
    }

    #[test]
    fn tube_radius_default() {
        assert!((tube_radius(&[vec![1.0, 0.6], vec![0.9, 2.0]]) - 0.1).abs() < 1e-12);
        assert_eq!(tube_radius(&[vec![0.0, 1.0]]), 0.1);
    }
}
