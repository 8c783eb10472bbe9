//! Streaming observers for common path statistics.

use std::sync::Arc;

use super::{Event, NetworkState, Observer};
use crate::graph::InterferenceGraph;

/// Samples `Q(N t) / N` on the scaled grid `t_k = k * step`, right-continuously.
#[derive(Debug, Clone)]
pub struct GridSampler {
    n_scale: f64,
    step: f64,
    last_k: usize,
    next_k: usize,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    queue_events: Vec<u64>,
}

impl GridSampler {
    /// Grid `0, step, .., floor(scaled_horizon / step) * step`.
    pub fn new(n_scale: f64, step: f64, scaled_horizon: f64) -> Self {
        assert!(n_scale > 0.0 && step > 0.0 && scaled_horizon >= 0.0);
        let last_k = (scaled_horizon / step * (1.0 + 1e-12)).floor() as usize;
        GridSampler {
            n_scale,
            step,
            last_k,
            next_k: 0,
            times: Vec::with_capacity(last_k + 1),
            values: Vec::with_capacity(last_k + 1),
            queue_events: vec![0; last_k.max(1)],
        }
    }

    fn raw_time(&self, k: usize) -> f64 {
        k as f64 * self.step * self.n_scale
    }

    fn push(&mut self, state: &NetworkState) {
        self.times.push(self.next_k as f64 * self.step);
        self.values
            .push(state.q.iter().map(|&x| x as f64 / self.n_scale).collect());
        self.next_k += 1;
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Largest number of queue events in one grid interval, divided by `N`:
    /// bounds the sup distance between the piecewise-constant grid path and
    /// the exact path.
    pub fn sampling_bound(&self) -> f64 {
        self.queue_events.iter().copied().max().unwrap_or(0) as f64 / self.n_scale
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<Vec<f64>>, f64) {
        let bound = self.sampling_bound();
        (self.times, self.values, bound)
    }
}

impl Observer for GridSampler {
    fn hold(&mut self, _from: f64, to: f64, state: &NetworkState) {
        while self.next_k <= self.last_k && self.raw_time(self.next_k) < to {
            self.push(state);
        }
    }

    fn jump(&mut self, event: &Event, _state: &NetworkState) {
        if event.kind.changes_queue() {
            let k = (event.time / (self.step * self.n_scale)) as usize;
            if k < self.queue_events.len() {
                self.queue_events[k] += 1;
            }
        }
    }

    fn finish(&mut self, time: f64, state: &NetworkState) {
        while self.next_k <= self.last_k && self.raw_time(self.next_k) <= time * (1.0 + 1e-12) {
            self.push(state);
        }
    }
}

/// Tracks `M_v(t) = Q_v(Nt)/N - lambda_v t + (1/N) int_0^{Nt} s_v 1{Q_v > 0} du`
/// in scaled time, with its exact running supremum of `|M_v|`.
#[derive(Debug, Clone)]
pub struct MartingaleTracker {
    v: usize,
    n_scale: f64,
    lambda: f64,
    served: f64,
    sup_abs: f64,
    last: f64,
    grid: Option<GridSampler>,
    grid_times: Vec<f64>,
    grid_values: Vec<f64>,
}

impl MartingaleTracker {
    pub fn new(v: usize, lambda_v: f64, n_scale: f64) -> Self {
        MartingaleTracker {
            v,
            n_scale,
            lambda: lambda_v,
            served: 0.0,
            sup_abs: 0.0,
            last: 0.0,
            grid: None,
            grid_times: Vec::new(),
            grid_values: Vec::new(),
        }
    }

    /// Also records `M_v` on the scaled grid.
    pub fn with_grid(mut self, step: f64, scaled_horizon: f64) -> Self {
        self.grid = Some(GridSampler::new(self.n_scale, step, scaled_horizon));
        self
    }

    fn value(&self, raw_t: f64, q: u64, served: f64) -> f64 {
        (q as f64 - self.lambda * raw_t + served) / self.n_scale
    }

    pub fn sup_abs(&self) -> f64 {
        self.sup_abs
    }

    /// Value at the end of the run.
    pub fn final_value(&self) -> f64 {
        self.last
    }

    pub fn grid(&self) -> Option<(&[f64], &[f64])> {
        self.grid
            .as_ref()
            .map(|_| (self.grid_times.as_slice(), self.grid_values.as_slice()))
    }
}

impl Observer for MartingaleTracker {
    fn hold(&mut self, from: f64, to: f64, state: &NetworkState) {
        let q = state.q[self.v];
        let rate = if state.sigma.is_active(self.v) && q > 0 { 1.0 } else { 0.0 };
        if let Some(g) = self.grid.as_mut() {
            while g.next_k <= g.last_k && g.raw_time(g.next_k) < to {
                let t = g.raw_time(g.next_k);
                let m = (q as f64 - self.lambda * t + self.served + rate * (t - from)) / self.n_scale;
                self.grid_times.push(g.next_k as f64 * g.step);
                self.grid_values.push(m);
                g.next_k += 1;
            }
        }
        let start = self.value(from, q, self.served);
        self.served += rate * (to - from);
        let end = self.value(to, q, self.served);
        self.sup_abs = self.sup_abs.max(start.abs()).max(end.abs());
        self.last = end;
    }

    fn finish(&mut self, time: f64, state: &NetworkState) {
        let q = state.q[self.v];
        self.last = self.value(time, q, self.served);
        self.sup_abs = self.sup_abs.max(self.last.abs());
        if let Some(g) = self.grid.as_mut() {
            while g.next_k <= g.last_k && g.raw_time(g.next_k) <= time * (1.0 + 1e-12) {
                self.grid_times.push(g.next_k as f64 * g.step);
                self.grid_values.push(self.last);
                g.next_k += 1;
            }
        }
    }
}

/// Time spent in each stable set, split into equal batches for batch-means
/// standard errors.
#[derive(Debug, Clone)]
pub struct OccupationTracker {
    graph: Arc<InterferenceGraph>,
    batch_len: f64,
    time: Vec<Vec<f64>>,
}

impl OccupationTracker {
    pub fn new(graph: Arc<InterferenceGraph>, horizon: f64, batches: usize) -> Self {
        assert!(horizon > 0.0 && batches > 0);
        let dim = graph.stable_sets().len();
        OccupationTracker {
            graph,
            batch_len: horizon / batches as f64,
            time: vec![vec![0.0; dim]; batches],
        }
    }

    /// Fraction of time in the `i`-th stable set (catalog order) with its
    /// batch-means standard error.
    pub fn fraction(&self, i: usize) -> (f64, f64) {
        let b = self.time.len() as f64;
        let fr: Vec<f64> = self.time.iter().map(|t| t[i] / self.batch_len).collect();
        let mean = fr.iter().sum::<f64>() / b;
        if self.time.len() < 2 {
            return (mean, f64::NAN);
        }
        let var = fr.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1.0);
        (mean, (var / b).sqrt())
    }
}

impl Observer for OccupationTracker {
    fn hold(&mut self, from: f64, to: f64, state: &NetworkState) {
        let i = self
            .graph
            .stable_sets()
            .index_of(state.sigma)
            .expect("schedule in catalog");
        let last = self.time.len() - 1;
        let mut t = from;
        let mut b = ((t / self.batch_len) as usize).min(last);
        // step by batch index: `t / batch_len` can round below a boundary
        // that `t` already sits on
        while t < to {
            let end = if b == last { to } else { to.min((b + 1) as f64 * self.batch_len) };
            if end > t {
                self.time[b][i] += end - t;
                t = end;
            }
            b += 1;
        }
    }
}

/// Per-node `int s_v` and `int s_v 1{Q_v > 0}` in raw time.
#[derive(Debug, Clone)]
pub struct ServiceIntegral {
    pub busy: Vec<f64>,
    pub served: Vec<f64>,
}

impl ServiceIntegral {
    pub fn new(n: usize) -> Self {
        ServiceIntegral {
            busy: vec![0.0; n],
            served: vec![0.0; n],
        }
    }
}

impl Observer for ServiceIntegral {
    fn hold(&mut self, from: f64, to: f64, state: &NetworkState) {
        for v in state.sigma.active_nodes() {
            self.busy[v] += to - from;
            if state.q[v] > 0 {
                self.served[v] += to - from;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Schedule;

    #[test]
    fn occupation_holds_split_on_batch_boundaries() {
        let g = Arc::new(InterferenceGraph::complete(2).unwrap());
        let horizon = 1e5 / 1.37;
        let batches = 50;
        let mut occ = OccupationTracker::new(g.clone(), horizon, batches);
        let state = NetworkState::new(vec![0, 0], Schedule::singleton(0));
        let len = horizon / batches as f64;
        let mut t = 0.0;
        for k in 1..=batches {
            let next = if k == batches { horizon } else { k as f64 * len };
            occ.hold(t, next, &state);
            t = next;
        }
        let i = g.stable_sets().index_of(Schedule::singleton(0)).unwrap();
        let (mean, se) = occ.fraction(i);
        assert!((mean - 1.0).abs() < 1e-9 && se < 1e-9, "{mean} {se}");
    }
}
