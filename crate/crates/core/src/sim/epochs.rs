use super::{Event, EventKind, NetworkState, Observer, Trajectory};
use crate::error::{Error, Result};

/// Activation epochs of one node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochStats {
    /// Completed `(b_k, d_k)` activation/deactivation pairs.
    pub epochs: Vec<(f64, f64)>,
    /// Activation time of an epoch still open at the end of the run.
    pub open_since: Option<f64>,
    /// `G(k)`: activations of other nodes in `(d_k, b_{k+1})`, for every
    /// deactivation followed by a new activation.
    pub intermediate: Vec<u64>,
    /// Time the node spent active, clipped to the end of the run.
    pub busy: f64,
    /// Largest queue length of the node seen during the run.
    pub max_queue: u64,
    pub end_time: f64,
}

impl EpochStats {
    pub fn deactivations(&self) -> usize {
        self.epochs.len()
    }
}

/// Streams [`EpochStats`]; optionally requests a stop at the `m`-th deactivation.
#[derive(Debug, Clone)]
pub struct EpochTracker {
    v: usize,
    stop_after: Option<usize>,
    since_deactivation: Option<u64>,
    stats: EpochStats,
}

impl EpochTracker {
    pub fn new(v: usize) -> Self {
        EpochTracker {
            v,
            stop_after: None,
            since_deactivation: None,
            stats: EpochStats::default(),
        }
    }

    pub fn stop_after_deactivations(mut self, m: usize) -> Self {
        self.stop_after = Some(m);
        self
    }

    pub fn stats(&self) -> &EpochStats {
        &self.stats
    }

    pub fn into_stats(self) -> EpochStats {
        self.stats
    }
}

impl Observer for EpochTracker {
    fn begin(&mut self, state: &NetworkState) {
        self.stats.max_queue = state.q[self.v];
        if state.sigma.is_active(self.v) {
            self.stats.open_since = Some(0.0);
        }
    }

    fn hold(&mut self, from: f64, to: f64, state: &NetworkState) {
        if state.sigma.is_active(self.v) {
            self.stats.busy += to - from;
        }
    }

    fn jump(&mut self, event: &Event, state: &NetworkState) {
        self.stats.max_queue = self.stats.max_queue.max(state.q[self.v]);
        match event.kind {
            EventKind::Activate if event.node == self.v => {
                if let Some(g) = self.since_deactivation.take() {
                    self.stats.intermediate.push(g);
                }
                self.stats.open_since = Some(event.time);
            }
            EventKind::Activate => {
                if let Some(g) = self.since_deactivation.as_mut() {
                    *g += 1;
                }
            }
            EventKind::Deactivate if event.node == self.v => {
                let b = self.stats.open_since.take().expect("deactivation of an active node");
                self.stats.epochs.push((b, event.time));
                self.since_deactivation = Some(0);
            }
            _ => {}
        }
    }

    fn finish(&mut self, time: f64, _state: &NetworkState) {
        self.stats.end_time = time;
    }

    fn should_stop(&self) -> bool {
        self.stop_after.is_some_and(|m| self.stats.epochs.len() >= m)
    }
}

/// Epoch statistics of node `v` over a recorded trajectory.
pub fn activation_epochs(traj: &Trajectory, v: usize) -> Result<EpochStats> {
    if v >= traj.node_count() {
        return Err(Error::NodeOutOfRange(v, v, traj.node_count()));
    }
    let mut tracker = EpochTracker::new(v);
    traj.replay(&mut tracker)?;
    Ok(tracker.into_stats())
}
