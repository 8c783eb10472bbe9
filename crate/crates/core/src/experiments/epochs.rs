use serde::Serialize;

use super::{check_q0, coupling_constants, replica_rng, run_replicas, CouplingConstants, Frequency, Summary};
use crate::error::{Error, Result};
use crate::sim::{run, Dynamics, Event, EventKind, NetworkState, Observer};
use crate::Params;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    pub n: u64,
    pub replicas: usize,
    pub constants: CouplingConstants,
    pub v0: usize,
    /// `ceil(N^{1-a} K_act)`.
    pub deactivations: u64,
    /// `N eps_1 K_time` (raw time).
    pub time_limit: f64,
    /// `2 N eps_1 / lambda_{v0}` (raw time).
    pub time_floor: f64,
    /// (i) the last counted deactivation happens by `time_limit`.
    pub completes_in_time: Frequency,
    /// (ii) busy fraction above `lambda_{v0} / 2` while `Q_{v0} / N` stayed
    /// below `eps_1`; over replicas that reached the deactivation.
    pub proportion_violation: Frequency,
    /// (iii) the last counted deactivation happens no earlier than `time_floor`.
    pub not_too_early: Frequency,
    /// Busy fraction of `v0` up to the last counted deactivation.
    pub busy_fraction: Summary,
    /// Replicas that did not reach the deactivation within the simulated window.
    pub flagged: usize,
    /// `inf_{v in V', s <= eps_1 K_time} Q_v(s) >= eps_0 / 2`.
    pub e_minus: Frequency,
    /// `sup_{v, s <= eps_1 K_time} Q_v(s) <= 2 |q0|_inf`.
    pub e_plus: Frequency,
}

/// Empirical frequencies of the three auxiliary events of the positivity
/// argument at one scale `N`, on a complete graph.
pub fn epoch_lemma_checks(params: &Params, q0: &[f64], n: u64, replicas: usize, seed: u64) -> Result<EpochReport> {
    if !params.graph().is_complete() {
        return Err(Error::CompleteGraphRequired);
    }
    check_q0(q0, params.node_count())?;
    if n == 0 || replicas == 0 {
        return Err(Error::invalid("N/replicas", "must be positive"));
    }
    let c = coupling_constants(q0, params)?;
    let v0 = q0
        .iter()
        .position(|&x| x == 0.0)
        .ok_or_else(|| Error::invalid("q0", "needs an empty start for the epoch checks"))?;
    let nf = n as f64;
    let a = params.a();
    let lambda_v0 = params.lambda()[v0];
    let m = (nf.powf(1.0 - a) * c.k_act).ceil().max(1.0) as u64;
    let time_limit = nf * c.eps1 * c.k_time;
    let time_floor = 2.0 * nf * c.eps1 / lambda_v0;
    let window = time_limit.max(time_floor);
    let q_inf = q0.iter().copied().fold(0.0, f64::max);
    let initial = NetworkState::from_fluid(q0, n);

    let outcomes = run_replicas(replicas, |r| {
        let mut rng = replica_rng(seed, 0, r);
        let mut obs = EpochWatch {
            v0,
            target: m,
            e_until: time_limit,
            v_prime: &c.v_prime,
            count: 0,
            busy: 0.0,
            max_q_v0: initial.q[v0],
            reached: None,
            min_v_prime: u64::MAX,
            max_all: 0,
        };
        run(params, &initial, window, Dynamics::Full, &mut rng, &mut obs)?;
        Ok(obs)
    })?;

    let counted: Vec<&EpochWatch> = outcomes.iter().filter(|o| o.reached.is_some()).collect();
    Ok(EpochReport {
        n,
        replicas,
        v0,
        deactivations: m,
        time_limit,
        time_floor,
        completes_in_time: Frequency::of(outcomes.iter().map(|o| o.reached.is_some_and(|(d, _, _)| d <= time_limit))),
        proportion_violation: Frequency::of(counted.iter().map(|o| {
            let (d, busy, max_q) = o.reached.expect("counted");
            max_q as f64 <= nf * c.eps1 && busy / d > lambda_v0 / 2.0
        })),
        not_too_early: Frequency::of(outcomes.iter().map(|o| o.reached.is_none_or(|(d, _, _)| d >= time_floor))),
        busy_fraction: Summary::of(
            &counted
                .iter()
                .map(|o| {
                    let (d, busy, _) = o.reached.expect("counted");
                    busy / d
                })
                .collect::<Vec<_>>(),
        ),
        flagged: outcomes.len() - counted.len(),
        e_minus: Frequency::of(outcomes.iter().map(|o| o.min_v_prime as f64 >= nf * c.eps0 / 2.0)),
        e_plus: Frequency::of(outcomes.iter().map(|o| o.max_all as f64 <= 2.0 * nf * q_inf)),
        constants: c.clone(),
    })
}

struct EpochWatch<'a> {
    v0: usize,
    target: u64,
    e_until: f64,
    v_prime: &'a [usize],
    count: u64,
    busy: f64,
    max_q_v0: u64,
    /// `(d, busy, max Q_{v0})` at the target deactivation.
    reached: Option<(f64, f64, u64)>,
    min_v_prime: u64,
    max_all: u64,
}

impl Observer for EpochWatch<'_> {
    fn begin(&mut self, state: &NetworkState) {
        self.min_v_prime = self.v_prime.iter().map(|&v| state.q[v]).min().unwrap_or(u64::MAX);
        self.max_all = state.q.iter().copied().max().unwrap_or(0);
    }

    fn hold(&mut self, from: f64, to: f64, state: &NetworkState) {
        if self.reached.is_none() && state.sigma.is_active(self.v0) {
            self.busy += to - from;
        }
    }

    fn jump(&mut self, event: &Event, state: &NetworkState) {
        if event.time <= self.e_until && event.kind.changes_queue() {
            for &v in self.v_prime {
                self.min_v_prime = self.min_v_prime.min(state.q[v]);
            }
            self.max_all = self.max_all.max(state.q[event.node]);
        }
        if self.reached.is_some() {
            return;
        }
        self.max_q_v0 = self.max_q_v0.max(state.q[self.v0]);
        if event.kind == EventKind::Deactivate && event.node == self.v0 {
            self.count += 1;
            if self.count == self.target {
                self.reached = Some((event.time, self.busy, self.max_q_v0));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::InterferenceGraph;
    use std::sync::Arc;

    #[test]
    fn report_shape() {
        let p = Params::new(Arc::new(InterferenceGraph::complete(2).unwrap()), vec![0.2, 0.2], 0.25).unwrap();
        let r = epoch_lemma_checks(&p, &[1.0, 0.0], 800, 50, 4).unwrap();
        assert_eq!(r.v0, 1);
        assert!(r.deactivations >= 1);
        assert!(r.time_floor < r.time_limit);
        assert_eq!(r.completes_in_time.count, 50);
        assert_eq!(r.flagged + r.proportion_violation.count, 50);
        assert!(r.busy_fraction.max <= 1.0);
        assert!(epoch_lemma_checks(&p, &[1.0, 1.0], 800, 5, 4).is_err());
    }
}
