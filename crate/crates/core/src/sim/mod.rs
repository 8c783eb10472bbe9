//! Event-driven simulation of the queue/schedule Markov process.
//!
//! The engine draws one exponential holding time from the total rate of the
//! current state and picks the event categorically, re-evaluating every
//! state-dependent rate after each event. Observers see the state on each
//! holding interval and after each jump, so statistics can be aggregated in
//! a single pass without storing the event list.

mod epochs;
mod observers;
mod rng;
mod scaled;
mod stopping;

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Schedule;
use crate::measures::{mean_service_rate_exact, psi_minus, psi_plus};
use crate::Params;

pub use epochs::{activation_epochs, EpochStats, EpochTracker};
pub use observers::{GridSampler, MartingaleTracker, OccupationTracker, ServiceIntegral};
pub use rng::{SimRng, RNG_ALGORITHM};
pub use scaled::{martingale_path, scale, scale_to, MartingalePath, ScaledPath};
pub use stopping::{stopping_time, GridPath, SampledPath, StoppingRule};

/// Default cap on the number of events a [`Trajectory`] stores.
pub const DEFAULT_EVENT_CAP: usize = 100_000_000;

/// Queue lengths and current schedule.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkState {
    pub q: Vec<u64>,
    pub sigma: Schedule,
}

impl NetworkState {
    pub fn new(q: Vec<u64>, sigma: Schedule) -> Self {
        NetworkState { q, sigma }
    }

    /// Empty schedule with the given queues.
    pub fn idle(q: Vec<u64>) -> Self {
        NetworkState {
            q,
            sigma: Schedule::EMPTY,
        }
    }

    /// Initial raw state for scale `n_scale` and fluid start `q0`: each
    /// coordinate is `round(n_scale * q0_v)`, schedule empty.
    pub fn from_fluid(q0: &[f64], n_scale: u64) -> Self {
        let q = q0
            .iter()
            .map(|&x| (x * n_scale as f64).round().max(0.0) as u64)
            .collect();
        Self::idle(q)
    }

    pub fn total(&self) -> u64 {
        self.q.iter().sum()
    }

    fn apply(&mut self, kind: EventKind, v: usize) {
        match kind {
            EventKind::Arrival => self.q[v] += 1,
            EventKind::Departure => self.q[v] -= 1,
            EventKind::Activate => self.sigma = self.sigma.with(v),
            EventKind::Deactivate => self.sigma = self.sigma.without(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Arrival,
    Departure,
    Activate,
    Deactivate,
}

impl EventKind {
    pub fn changes_queue(self) -> bool {
        matches!(self, EventKind::Arrival | EventKind::Departure)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Departure => "departure",
            EventKind::Activate => "activate",
            EventKind::Deactivate => "deactivate",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub node: usize,
}

/// Which generator drives the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    /// Queues and schedule evolve jointly.
    Full,
    /// Queue-only chain; node `v` is served at rate `pi^q(s_v = 1)` when `q_v > 0`.
    Homogenized,
    /// Schedule-only chain at pinned queues (no arrivals or departures).
    FrozenQueues,
}

/// Receives the simulated path.
pub trait Observer {
    fn begin(&mut self, _state: &NetworkState) {}

    /// `state` held on `[from, to)`.
    fn hold(&mut self, _from: f64, _to: f64, _state: &NetworkState) {}

    /// `state` is the state right after `event`.
    fn jump(&mut self, _event: &Event, _state: &NetworkState) {}

    /// Called once at the end of the run with the state at `time`.
    fn finish(&mut self, _time: f64, _state: &NetworkState) {}

    /// Requests an early stop; checked after every event.
    fn should_stop(&self) -> bool {
        false
    }
}

impl Observer for () {}

impl<O: Observer + ?Sized> Observer for &mut O {
    fn begin(&mut self, state: &NetworkState) {
        (**self).begin(state)
    }
    fn hold(&mut self, from: f64, to: f64, state: &NetworkState) {
        (**self).hold(from, to, state)
    }
    fn jump(&mut self, event: &Event, state: &NetworkState) {
        (**self).jump(event, state)
    }
    fn finish(&mut self, time: f64, state: &NetworkState) {
        (**self).finish(time, state)
    }
    fn should_stop(&self) -> bool {
        (**self).should_stop()
    }
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn begin(&mut self, state: &NetworkState) {
        self.0.begin(state);
        self.1.begin(state);
    }
    fn hold(&mut self, from: f64, to: f64, state: &NetworkState) {
        self.0.hold(from, to, state);
        self.1.hold(from, to, state);
    }
    fn jump(&mut self, event: &Event, state: &NetworkState) {
        self.0.jump(event, state);
        self.1.jump(event, state);
    }
    fn finish(&mut self, time: f64, state: &NetworkState) {
        self.0.finish(time, state);
        self.1.finish(time, state);
    }
    fn should_stop(&self) -> bool {
        self.0.should_stop() || self.1.should_stop()
    }
}

impl<O: Observer> Observer for Vec<O> {
    fn begin(&mut self, state: &NetworkState) {
        self.iter_mut().for_each(|o| o.begin(state));
    }
    fn hold(&mut self, from: f64, to: f64, state: &NetworkState) {
        self.iter_mut().for_each(|o| o.hold(from, to, state));
    }
    fn jump(&mut self, event: &Event, state: &NetworkState) {
        self.iter_mut().for_each(|o| o.jump(event, state));
    }
    fn finish(&mut self, time: f64, state: &NetworkState) {
        self.iter_mut().for_each(|o| o.finish(time, state));
    }
    fn should_stop(&self) -> bool {
        self.iter().any(|o| o.should_stop())
    }
}

/// Outcome of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub events: u64,
    /// `horizon`, or the time of the event after which an observer stopped the run.
    pub end_time: f64,
    pub final_state: NetworkState,
    pub stopped_early: bool,
}

/// Checks an initial state against the graph.
pub fn validate_state(params: &Params, state: &NetworkState) -> Result<()> {
    let n = params.node_count();
    if state.q.len() != n {
        return Err(Error::LengthMismatch {
            what: "initial queue vector",
            expected: n,
            got: state.q.len(),
        });
    }
    if state.sigma.0 >> n != 0 || !params.graph().is_stable_schedule(state.sigma) {
        return Err(Error::invalid(
            "initial schedule",
            format!("{} is not a stable set", state.sigma.label(n)),
        ));
    }
    Ok(())
}

/// Simulates on `[0, horizon]` (raw time), feeding `observer`.
pub fn run<O: Observer>(
    params: &Params,
    initial: &NetworkState,
    horizon: f64,
    dynamics: Dynamics,
    rng: &mut SimRng,
    mut observer: O,
) -> Result<RunSummary> {
    validate_state(params, initial)?;
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", format!("{horizon} is not a finite nonnegative time")));
    }
    let g = params.graph();
    let n = g.node_count();
    let a = params.a();
    let lambda = params.lambda();
    let mut state = initial.clone();
    let mut rates: Vec<(f64, EventKind, usize)> = Vec::with_capacity(3 * n);
    let mut served = vec![0.0; n];
    let mut q_real = vec![0.0; n];
    let mut t = 0.0;
    let mut events = 0u64;
    observer.begin(&state);

    loop {
        rates.clear();
        match dynamics {
            Dynamics::Full | Dynamics::FrozenQueues => {
                let frozen = dynamics == Dynamics::FrozenQueues;
                for v in 0..n {
                    let x = state.q[v] as f64;
                    if !frozen && lambda[v] > 0.0 {
                        rates.push((lambda[v], EventKind::Arrival, v));
                    }
                    if state.sigma.is_active(v) {
                        if !frozen && state.q[v] > 0 {
                            rates.push((1.0, EventKind::Departure, v));
                        }
                        rates.push((psi_minus(x, a), EventKind::Deactivate, v));
                    } else if g.can_activate(state.sigma, v) {
                        rates.push((psi_plus(x, a), EventKind::Activate, v));
                    }
                }
            }
            Dynamics::Homogenized => {
                for (dst, &x) in q_real.iter_mut().zip(&state.q) {
                    *dst = x as f64;
                }
                let m = mean_service_rate_exact(params, &q_real)?;
                served.copy_from_slice(&m);
                for v in 0..n {
                    if lambda[v] > 0.0 {
                        rates.push((lambda[v], EventKind::Arrival, v));
                    }
                    if state.q[v] > 0 && served[v] > 0.0 {
                        rates.push((served[v], EventKind::Departure, v));
                    }
                }
            }
        }
        let total: f64 = rates.iter().map(|r| r.0).sum();
        let next = if total > 0.0 {
            t + rng.exponential(total)
        } else {
            f64::INFINITY
        };
        if next > horizon {
            observer.hold(t, horizon, &state);
            observer.finish(horizon, &state);
            return Ok(RunSummary {
                events,
                end_time: horizon,
                final_state: state,
                stopped_early: false,
            });
        }
        observer.hold(t, next, &state);
        let mut target = rng.uniform() * total;
        let mut chosen = rates[rates.len() - 1];
        for r in &rates {
            if target < r.0 {
                chosen = *r;
                break;
            }
            target -= r.0;
        }
        let (_, kind, v) = chosen;
        state.apply(kind, v);
        t = next;
        events += 1;
        let event = Event { time: t, kind, node: v };
        observer.jump(&event, &state);
        if observer.should_stop() {
            observer.finish(t, &state);
            return Ok(RunSummary {
                events,
                end_time: t,
                final_state: state,
                stopped_early: true,
            });
        }
    }
}

/// A recorded sample path: initial state plus event list.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: Params,
    pub initial: NetworkState,
    pub events: Vec<Event>,
    pub horizon: f64,
    pub seed: u64,
    pub replica: u64,
    pub dynamics: Dynamics,
    /// Set when the event cap was reached; `events` then holds only a prefix.
    pub truncated: bool,
    pub total_events: u64,
    pub final_state: NetworkState,
}

struct Recorder {
    events: Vec<Event>,
    cap: usize,
    truncated: bool,
}

impl Observer for Recorder {
    fn jump(&mut self, event: &Event, _state: &NetworkState) {
        if self.events.len() < self.cap {
            self.events.push(*event);
        } else {
            self.truncated = true;
        }
    }
}

/// Simulates the coupled process and records every event.
pub fn simulate(params: &Params, initial: &NetworkState, horizon: f64, seed: u64) -> Result<Trajectory> {
    simulate_with(params, initial, horizon, seed, 0, Dynamics::Full, DEFAULT_EVENT_CAP)
}

/// Simulates the homogenized queue-only chain and records every event.
pub fn simulate_homogenized(params: &Params, q0: &[u64], horizon: f64, seed: u64) -> Result<Trajectory> {
    let initial = NetworkState::idle(q0.to_vec());
    simulate_with(params, &initial, horizon, seed, 0, Dynamics::Homogenized, DEFAULT_EVENT_CAP)
}

pub fn simulate_with(
    params: &Params,
    initial: &NetworkState,
    horizon: f64,
    seed: u64,
    replica: u64,
    dynamics: Dynamics,
    event_cap: usize,
) -> Result<Trajectory> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon", format!("{horizon} is not positive")));
    }
    if dynamics == Dynamics::Homogenized && !initial.sigma.is_empty() {
        return Err(Error::invalid("initial schedule", "the homogenized chain carries no schedule"));
    }
    let mut rng = SimRng::for_replica(seed, replica);
    let mut rec = Recorder {
        events: Vec::new(),
        cap: event_cap,
        truncated: false,
    };
    let summary = run(params, initial, horizon, dynamics, &mut rng, &mut rec)?;
    Ok(Trajectory {
        params: params.clone(),
        initial: initial.clone(),
        events: rec.events,
        horizon,
        seed,
        replica,
        dynamics,
        truncated: rec.truncated,
        total_events: summary.events,
        final_state: summary.final_state,
    })
}

impl Trajectory {
    pub fn node_count(&self) -> usize {
        self.initial.q.len()
    }

    /// Replays the events: yields each event with the state right after it.
    pub fn states(&self) -> impl Iterator<Item = (Event, NetworkState)> + '_ {
        let mut state = self.initial.clone();
        self.events.iter().map(move |e| {
            state.apply(e.kind, e.node);
            (*e, state.clone())
        })
    }

    /// Feeds the recorded path to an observer as if it were simulated live.
    pub fn replay<O: Observer>(&self, mut observer: O) -> Result<()> {
        if self.truncated {
            return Err(Error::Capacity(format!(
                "trajectory stored only {} of {} events",
                self.events.len(),
                self.total_events
            )));
        }
        let mut state = self.initial.clone();
        let mut t = 0.0;
        observer.begin(&state);
        for e in &self.events {
            observer.hold(t, e.time, &state);
            state.apply(e.kind, e.node);
            t = e.time;
            observer.jump(e, &state);
        }
        observer.hold(t, self.horizon, &state);
        observer.finish(self.horizon, &state);
        Ok(())
    }

    /// Checks the path invariants: increasing times, feasible schedules,
    /// departures only from active nonempty queues, activations only when no
    /// neighbor is active.
    pub fn check_invariants(&self) -> Result<()> {
        let g = self.params.graph();
        let mut state = self.initial.clone();
        let mut t = 0.0;
        for e in &self.events {
            let bad = |why: &str| Error::Numerical(format!("invalid event {e:?}: {why}"));
            if e.time <= t && !(t == 0.0 && e.time > 0.0) {
                return Err(bad("time not increasing"));
            }
            match e.kind {
                EventKind::Departure => {
                    if !state.sigma.is_active(e.node) || state.q[e.node] == 0 {
                        return Err(bad("departure from inactive or empty queue"));
                    }
                }
                EventKind::Activate => {
                    if !g.can_activate(state.sigma, e.node) {
                        return Err(bad("activation next to an active neighbor"));
                    }
                }
                EventKind::Deactivate => {
                    if !state.sigma.is_active(e.node) {
                        return Err(bad("deactivation of an inactive node"));
                    }
                }
                EventKind::Arrival => {}
            }
            state.apply(e.kind, e.node);
            if !g.is_stable_schedule(state.sigma) {
                return Err(bad("schedule not stable"));
            }
            t = e.time;
        }
        if t > self.horizon {
            return Err(Error::Numerical("event past the horizon".into()));
        }
        Ok(())
    }

    /// CSV with header `t,kind,node,q_0,..,q_{n-1},sigma`; the first row is
    /// the initial state with kind `init` and an empty node field.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.node_count();
        write!(w, "t,kind,node")?;
        for v in 0..n {
            write!(w, ",q_{v}")?;
        }
        writeln!(w, ",sigma")?;
        write_state_row(&mut w, 0.0, "init", None, &self.initial)?;
        for (e, s) in self.states() {
            write_state_row(&mut w, e.time, e.kind.as_str(), Some(e.node), &s)?;
        }
        Ok(())
    }
}

fn write_state_row<W: Write>(
    w: &mut W,
    t: f64,
    kind: &str,
    node: Option<usize>,
    s: &NetworkState,
) -> io::Result<()> {
    write!(w, "{t},{kind},")?;
    if let Some(v) = node {
        write!(w, "{v}")?;
    }
    for x in &s.q {
        write!(w, ",{x}")?;
    }
    writeln!(w, ",{}", s.sigma.label(s.q.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::InterferenceGraph;
    use crate::measures::stationary_measure;
    use std::sync::Arc;

    fn params(g: InterferenceGraph, lambda: Vec<f64>, a: f64) -> Params {
        Params::new(Arc::new(g), lambda, a).unwrap()
    }

    #[test]
    fn idle_single_node_only_toggles() {
        let p = params(InterferenceGraph::edgeless(1).unwrap(), vec![0.0], 0.5);
        let traj = simulate(&p, &NetworkState::idle(vec![0]), 2000.0, 3).unwrap();
        traj.check_invariants().unwrap();
        assert!(traj
            .events
            .iter()
            .all(|e| matches!(e.kind, EventKind::Activate | EventKind::Deactivate)));
        assert_eq!(traj.final_state.q, vec![0]);
        // alternating chain with both rates 1/2: about 2000 / 4 activations
        let acts = traj.events.iter().filter(|e| e.kind == EventKind::Activate).count() as f64;
        assert!((acts - 500.0).abs() < 5.0 * 500f64.sqrt(), "{acts}");
    }

    #[test]
    fn arrival_count_matches_poisson_law() {
        let p = params(InterferenceGraph::edgeless(1).unwrap(), vec![0.4], 0.5);
        let horizon = 25.0;
        let replicas = 1000;
        let arrivals: u64 = (0..replicas)
            .map(|r| {
                let traj = simulate_with(
                    &p,
                    &NetworkState::idle(vec![0]),
                    horizon,
                    11,
                    r,
                    Dynamics::Full,
                    DEFAULT_EVENT_CAP,
                )
                .unwrap();
                traj.events.iter().filter(|e| e.kind == EventKind::Arrival).count() as u64
            })
            .sum();
        let mean = arrivals as f64 / replicas as f64;
        let expected = 0.4 * horizon;
        let tol = 3.0 * (expected / replicas as f64).sqrt();
        assert!((mean - expected).abs() <= tol, "mean {mean}, tol {tol}");
    }

    #[test]
    fn invariants_hold_across_graphs_and_seeds() {
        let graphs = [
            InterferenceGraph::complete(3).unwrap(),
            InterferenceGraph::cycle(5).unwrap(),
            InterferenceGraph::path(4).unwrap(),
        ];
        for g in graphs {
            let n = g.node_count();
            let p = params(g, vec![0.3; n], 0.7);
            for seed in 0..10 {
                let traj = simulate(&p, &NetworkState::idle(vec![2; n]), 300.0, seed).unwrap();
                traj.check_invariants().unwrap();
                assert_eq!(traj.total_events as usize, traj.events.len());
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let p = params(InterferenceGraph::cycle(4).unwrap(), vec![0.2; 4], 0.5);
        let init = NetworkState::idle(vec![3, 0, 1, 4]);
        let mut a = Vec::new();
        let mut b = Vec::new();
        simulate(&p, &init, 200.0, 99).unwrap().write_csv(&mut a).unwrap();
        simulate(&p, &init, 200.0, 99).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        simulate(&p, &init, 200.0, 100).unwrap().write_csv(&mut c).unwrap();
        assert_ne!(a, c);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("t,kind,node,q_0,q_1,q_2,q_3,sigma\n0,init,,3,0,1,4,0000\n"));
    }

    #[test]
    fn homogenized_chain() {
        let p = params(InterferenceGraph::complete(2).unwrap(), vec![0.0, 0.0], 0.5);
        let traj = simulate_homogenized(&p, &[0, 0], 100.0, 1).unwrap();
        assert!(traj.events.is_empty());

        let p = params(InterferenceGraph::complete(3).unwrap(), vec![0.3, 0.2, 0.4], 0.5);
        let traj = simulate_homogenized(&p, &[5, 0, 2], 500.0, 1).unwrap();
        assert!(traj.events.iter().all(|e| e.kind.changes_queue()));
        for (_, s) in traj.states() {
            assert!(s.sigma.is_empty());
        }
    }

    #[test]
    fn homogenized_departure_rate_is_the_marginal() {
        // single node with no arrivals: the time to the first departure from
        // q is exponential with rate w / (1 + w), w = (1 + q)^a
        let p = params(InterferenceGraph::edgeless(1).unwrap(), vec![0.0], 0.8);
        let q = 4u64;
        let w = 5f64.powf(0.8);
        let rate = w / (1.0 + w);
        let replicas = 4000;
        let mut total = 0.0;
        for r in 0..replicas {
            let traj = simulate_with(
                &p,
                &NetworkState::idle(vec![q]),
                1e6,
                5,
                r,
                Dynamics::Homogenized,
                1,
            )
            .unwrap();
            total += traj.events[0].time;
        }
        let mean = total / replicas as f64;
        let se = 1.0 / rate / (replicas as f64).sqrt();
        assert!((mean - 1.0 / rate).abs() < 4.0 * se, "{mean} vs {}", 1.0 / rate);
    }

    #[test]
    fn frozen_queue_occupation_matches_stationary_law() {
        let p = params(InterferenceGraph::path(3).unwrap(), vec![0.3; 3], 0.5);
        let q = vec![5u64, 1, 2];
        let mut rng = SimRng::for_replica(7, 0);
        let mut occ = OccupationTracker::new(p.graph_arc().clone(), 2e4, 40);
        run(&p, &NetworkState::idle(q.clone()), 2e4, Dynamics::FrozenQueues, &mut rng, &mut occ).unwrap();
        let qf: Vec<f64> = q.iter().map(|&x| x as f64).collect();
        let pi = stationary_measure(&p, &qf).unwrap();
        for (i, (s, target)) in pi.iter().enumerate() {
            let (mean, se) = occ.fraction(i);
            assert!((mean - target).abs() <= 3.0 * se + 1e-12, "{s:?}: {mean} vs {target} (se {se})");
        }
    }

    #[test]
    fn rejects_bad_initial_state() {
        let p = params(InterferenceGraph::complete(2).unwrap(), vec![0.3, 0.3], 0.5);
        assert!(simulate(&p, &NetworkState::new(vec![0, 0], Schedule(0b11)), 1.0, 0).is_err());
        assert!(simulate(&p, &NetworkState::idle(vec![0]), 1.0, 0).is_err());
        assert!(simulate(&p, &NetworkState::idle(vec![0, 0]), 0.0, 0).is_err());
    }

    #[test]
    fn truncated_trajectory_cannot_be_replayed() {
        let p = params(InterferenceGraph::complete(2).unwrap(), vec![0.3, 0.3], 0.5);
        let traj = simulate_with(&p, &NetworkState::idle(vec![1, 1]), 100.0, 0, 0, Dynamics::Full, 5).unwrap();
        assert!(traj.truncated);
        assert_eq!(traj.events.len(), 5);
        assert!(traj.total_events > 5);
        assert!(traj.replay(ServiceIntegral::new(2)).is_err());
    }
}
