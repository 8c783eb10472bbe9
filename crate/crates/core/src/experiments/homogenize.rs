use serde::Serialize;

use super::{check_horizon, check_ladder, check_q0, linear_fit, replica_rng, run_replicas, Frequency, Summary};
use crate::error::{Error, Result};
use crate::fluid::{solve_complete, solve_general};
use crate::measures::mean_service_rate_exact;
use crate::sim::{run, Dynamics, Event, NetworkState, Observer};
use crate::Params;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogenizationRow {
    pub n: u64,
    pub replicas: usize,
    /// `max_v sup_t |int_0^t (s_v - pi(s_v = 1)) ds|` per replica.
    pub discrepancy: Summary,
    /// Replicas whose path left the localization box before the horizon.
    pub box_exit: Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogenizationReport {
    pub rows: Vec<HomogenizationRow>,
    pub box_lower: f64,
    pub box_upper: f64,
    pub a_beta: f64,
    pub hypothesis_ok: bool,
    /// Least-squares slope of `log(mean / log(N)^{3/2})` on `log N`; needs
    /// at least two scales.
    pub slope: Option<f64>,
    pub theoretical_slope: f64,
}

/// Localized homogenization error along the full process, per scale.
///
/// The box is `(eps/3, 3 max q*)` with `eps = min q*` over the horizon.
pub fn homogenization_discrepancy(
    params: &Params,
    q0: &[f64],
    ns: &[u64],
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<HomogenizationReport> {
    check_ladder(ns, replicas)?;
    check_q0(q0, params.node_count())?;
    check_horizon(horizon)?;
    let a_beta = params.a() * params.beta();
    let fluid = if q0.iter().all(|&x| x > 0.0) {
        solve_general(params, q0, horizon)?
    } else if params.graph().is_complete() {
        solve_complete(params, q0, horizon)?
    } else {
        return Err(Error::EmptyLocalization);
    };
    let lo = fluid.values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = fluid.values.iter().flatten().copied().fold(0.0, f64::max);
    let (lower, upper) = (lo / 3.0, 3.0 * hi);

    let mut rows = Vec::with_capacity(ns.len());
    for (level, &n) in ns.iter().enumerate() {
        let initial = NetworkState::from_fluid(q0, n);
        let outcomes = run_replicas(replicas, |r| {
            let mut rng = replica_rng(seed, level, r);
            let mut obs = Discrepancy::new(params, n as f64, lower, upper);
            let summary = run(params, &initial, n as f64 * horizon, Dynamics::Full, &mut rng, &mut obs)?;
            if let Some(e) = obs.error.take() {
                return Err(e);
            }
            Ok((obs.sup / n as f64, obs.exited_at_start, summary.stopped_early))
        })?;
        if horizon > 0.0 && outcomes.iter().all(|o| o.1) {
            return Err(Error::EmptyLocalization);
        }
        let values: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
        rows.push(HomogenizationRow {
            n,
            replicas,
            discrepancy: Summary::of(&values),
            box_exit: Frequency::of(outcomes.iter().map(|o| o.2)),
        });
    }
    let usable: Vec<&HomogenizationRow> = rows
        .iter()
        .filter(|r| r.n > 1 && r.discrepancy.mean > 0.0)
        .collect();
    let slope = (usable.len() >= 2).then(|| {
        let x: Vec<f64> = usable.iter().map(|r| (r.n as f64).ln()).collect();
        let y: Vec<f64> = usable
            .iter()
            .map(|r| (r.discrepancy.mean / (r.n as f64).ln().powf(1.5)).ln())
            .collect();
        linear_fit(&x, &y).0
    });
    Ok(HomogenizationReport {
        rows,
        box_lower: lower,
        box_upper: upper,
        a_beta,
        hypothesis_ok: a_beta < 0.5,
        slope,
        theoretical_slope: a_beta - 0.5,
    })
}

/// Running `int (s_v - m_v(Q)) du` in raw time, stopped on leaving the box.
struct Discrepancy<'a> {
    params: &'a Params,
    n: f64,
    lower: f64,
    upper: f64,
    rate: Vec<f64>,
    integral: Vec<f64>,
    sup: f64,
    outside: bool,
    exited_at_start: bool,
    error: Option<Error>,
}

impl<'a> Discrepancy<'a> {
    fn new(params: &'a Params, n: f64, lower: f64, upper: f64) -> Self {
        let k = params.node_count();
        Discrepancy {
            params,
            n,
            lower,
            upper,
            rate: vec![0.0; k],
            integral: vec![0.0; k],
            sup: 0.0,
            outside: false,
            exited_at_start: false,
            error: None,
        }
    }

    fn refresh(&mut self, state: &NetworkState) {
        self.outside = state.q.iter().any(|&x| {
            let y = x as f64 / self.n;
            y <= self.lower || y >= self.upper
        });
        let q: Vec<f64> = state.q.iter().map(|&x| x as f64).collect();
        match mean_service_rate_exact(self.params, &q) {
            Ok(m) => self.rate = m,
            Err(e) => self.error = Some(e),
        }
    }
}

impl Observer for Discrepancy<'_> {
    fn begin(&mut self, state: &NetworkState) {
        self.refresh(state);
        self.exited_at_start = self.outside;
    }

    fn hold(&mut self, from: f64, to: f64, state: &NetworkState) {
        if self.outside {
            return;
        }
        for v in 0..self.integral.len() {
            let s = if state.sigma.is_active(v) { 1.0 } else { 0.0 };
            self.integral[v] += (s - self.rate[v]) * (to - from);
            self.sup = self.sup.max(self.integral[v].abs());
        }
    }

    fn jump(&mut self, event: &Event, state: &NetworkState) {
        if event.kind.changes_queue() {
            self.refresh(state);
        }
    }

    fn should_stop(&self) -> bool {
        self.outside || self.error.is_some()
    }
}
