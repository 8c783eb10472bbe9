use serde::Serialize;

use super::{check_ladder, check_q0, coupling_constants, replica_rng, run_replicas, CouplingConstants, Frequency, Summary};
use crate::error::{Error, Result};
use crate::sim::{run, Dynamics, Event, NetworkState, Observer};
use crate::Params;

/// Crossing times are followed up to this multiple of `eps K_time`.
pub const CROSSING_FOLLOW_UP: f64 = 10.0;

/// Time at which growth from the origin is checked in the supercritical case.
pub const GROWTH_CHECK_TIME: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PositivityMode {
    /// Some queue starts positive: crossing of `eps_1` by an empty start.
    Crossing,
    /// All queues start empty with total load above 1.
    Growth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityRow {
    pub n: u64,
    pub replicas: usize,
    /// Crossing mode: `T_-^eps <= eps K_time`. Growth mode:
    /// `max_v Q_v(t) >= (s(lambda) - 1) t / n` at the check time.
    pub hit: Frequency,
    /// Crossing mode: every queue in `V' + {v0}` is at least `eps` at the crossing.
    pub all_above: Option<Frequency>,
    /// Crossing mode: scaled crossing times (`+inf` when not reached
    /// within the follow-up window).
    pub crossing_time: Option<Summary>,
    /// Crossing mode: smallest queue over `V' + {v0}` at the crossing.
    pub min_at_crossing: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub mode: PositivityMode,
    pub constants: Option<CouplingConstants>,
    pub eps: f64,
    /// `eps K_time` (crossing) or the growth check time.
    pub time_limit: f64,
    /// First empty start, if any.
    pub v0: Option<usize>,
    pub rows: Vec<PositivityRow>,
}

pub fn positivity_experiment(
    params: &Params,
    q0: &[f64],
    ns: &[u64],
    replicas: usize,
    seed: u64,
) -> Result<PositivityReport> {
    if !params.graph().is_complete() {
        return Err(Error::CompleteGraphRequired);
    }
    check_ladder(ns, replicas)?;
    let n_nodes = params.node_count();
    check_q0(q0, n_nodes)?;
    if q0.iter().all(|&x| x == 0.0) {
        let s_lambda = params.total_arrival();
        if s_lambda <= 1.0 {
            return Err(Error::Domain(
                "zero start with total load at most 1 stays at the origin".into(),
            ));
        }
        let t = GROWTH_CHECK_TIME;
        let threshold = (s_lambda - 1.0) * t / n_nodes as f64;
        let mut rows = Vec::with_capacity(ns.len());
        for (level, &n) in ns.iter().enumerate() {
            let initial = NetworkState::from_fluid(q0, n);
            let hits = run_replicas(replicas, |r| {
                let mut rng = replica_rng(seed, level, r);
                let out = run(params, &initial, n as f64 * t, Dynamics::Full, &mut rng, ())?;
                let max = out.final_state.q.iter().copied().max().unwrap_or(0) as f64 / n as f64;
                Ok(max >= threshold)
            })?;
            rows.push(PositivityRow {
                n,
                replicas,
                hit: Frequency::of(hits),
                all_above: None,
                crossing_time: None,
                min_at_crossing: None,
            });
        }
        return Ok(PositivityReport {
            mode: PositivityMode::Growth,
            constants: None,
            eps: threshold,
            time_limit: t,
            v0: None,
            rows,
        });
    }

    let constants = coupling_constants(q0, params)?;
    let eps = constants.eps1;
    let limit = eps * constants.k_time;
    let v0 = (0..n_nodes).find(|&v| q0[v] == 0.0);
    let mut watched = constants.v_prime.clone();
    watched.extend(v0);
    let mut rows = Vec::with_capacity(ns.len());
    for (level, &n) in ns.iter().enumerate() {
        let initial = NetworkState::from_fluid(q0, n);
        let outcomes = run_replicas(replicas, |r| {
            let mut rng = replica_rng(seed, level, r);
            let mut obs = Crossing {
                n: n as f64,
                eps,
                v0,
                watched: &watched,
                time: f64::INFINITY,
                min_at: f64::NAN,
            };
            run(
                params,
                &initial,
                n as f64 * limit * CROSSING_FOLLOW_UP,
                Dynamics::Full,
                &mut rng,
                &mut obs,
            )?;
            Ok((obs.time, obs.min_at))
        })?;
        let times: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
        let mins: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
        rows.push(PositivityRow {
            n,
            replicas,
            hit: Frequency::of(times.iter().map(|&t| t <= limit)),
            all_above: Some(Frequency::of(mins.iter().map(|&m| m >= eps))),
            crossing_time: Some(Summary::of(&times)),
            min_at_crossing: Some(Summary::of(&mins)),
        });
    }
    Ok(PositivityReport {
        mode: PositivityMode::Crossing,
        constants: Some(constants),
        eps,
        time_limit: limit,
        v0,
        rows,
    })
}

/// First scaled time `Q_{v0} / N >= eps` (or the smallest queue, without an
/// empty start), with the smallest watched queue at that moment.
struct Crossing<'a> {
    n: f64,
    eps: f64,
    v0: Option<usize>,
    watched: &'a [usize],
    time: f64,
    min_at: f64,
}

impl Crossing<'_> {
    fn check(&mut self, t: f64, state: &NetworkState) {
        if self.time.is_finite() {
            return;
        }
        let y = |v: usize| state.q[v] as f64 / self.n;
        let level = match self.v0 {
            Some(v) => y(v),
            None => (0..state.q.len()).map(y).fold(f64::INFINITY, f64::min),
        };
        if level >= self.eps {
            self.time = t / self.n;
            self.min_at = self.watched.iter().map(|&v| y(v)).fold(f64::INFINITY, f64::min);
        }
    }
}

impl Observer for Crossing<'_> {
    fn begin(&mut self, state: &NetworkState) {
        self.check(0.0, state);
    }

    fn jump(&mut self, event: &Event, state: &NetworkState) {
        if event.kind.changes_queue() {
            self.check(event.time, state);
        }
    }

    fn should_stop(&self) -> bool {
        self.time.is_finite()
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
    fn positive_start_crosses_immediately() {
        let r = positivity_experiment(&complete2(0.2), &[1.0, 0.5], &[100], 10, 1).unwrap();
        assert_eq!(r.mode, PositivityMode::Crossing);
        assert!(r.eps < 0.5);
        assert_eq!(r.rows[0].hit.value, 1.0);
        assert_eq!(r.rows[0].crossing_time.as_ref().unwrap().max, 0.0);
    }

    #[test]
    fn boundary_start_reports_frequencies() {
        let r = positivity_experiment(&complete2(0.2), &[1.0, 0.0], &[50, 200], 20, 2).unwrap();
        assert_eq!(r.v0, Some(1));
        for row in &r.rows {
            assert_eq!(row.hit.count, 20);
            assert!((0.0..=1.0).contains(&row.hit.value));
        }
    }

    #[test]
    fn supercritical_growth() {
        let r = positivity_experiment(&complete2(0.7), &[0.0, 0.0], &[400], 20, 3).unwrap();
        assert_eq!(r.mode, PositivityMode::Growth);
        assert!(r.rows[0].hit.value >= 0.9);
        assert!(positivity_experiment(&complete2(0.3), &[0.0, 0.0], &[400], 2, 3).is_err());
    }
}
