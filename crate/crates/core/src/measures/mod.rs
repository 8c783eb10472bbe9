//! Exact computations on the schedule space at frozen queue lengths.
//!
//! For a queue vector `q`, the schedule process is a reversible chain on the
//! stable sets of the interference graph: an inactive node `v` with no active
//! neighbor activates at rate `psi_plus(q_v)` and an active node deactivates
//! at rate `psi_minus(q_v)`. Its stationary law is the product form
//! `pi(s) ∝ prod_{v in s} (1 + q_v)^a`.

pub mod linalg;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{InterferenceGraph, Schedule};
use crate::scalar::Scalar;

/// Arrival rates, rate exponent and spectral-gap exponent on a fixed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    graph: Arc<InterferenceGraph>,
    lambda: Vec<T>,
    a: T,
    beta: T,
}

/// Gap exponent used when none is given: 1 on complete graphs, `2(n+1)` otherwise.
pub fn default_beta<T: Scalar>(graph: &InterferenceGraph) -> T {
    if graph.is_complete() {
        T::one()
    } else {
        T::from_count(2 * (graph.node_count() + 1))
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Zero arrival rates and `a = 0` are accepted for degenerate test
    /// configurations; negative or non-finite values are not.
    pub fn new(graph: Arc<InterferenceGraph>, lambda: Vec<T>, a: T) -> Result<Self> {
        let beta = default_beta(&graph);
        Self::with_beta(graph, lambda, a, beta)
    }

    pub fn with_beta(graph: Arc<InterferenceGraph>, lambda: Vec<T>, a: T, beta: T) -> Result<Self> {
        if lambda.len() != graph.node_count() {
            return Err(Error::LengthMismatch {
                what: "lambda",
                expected: graph.node_count(),
                got: lambda.len(),
            });
        }
        if let Some((v, l)) = lambda
            .iter()
            .enumerate()
            .find(|(_, l)| !l.is_finite() || **l < T::zero())
        {
            return Err(Error::invalid("lambda", format!("entry {v} is {l}")));
        }
        if !a.is_finite() || a < T::zero() {
            return Err(Error::invalid("a", format!("{a} is not a nonnegative exponent")));
        }
        if !beta.is_finite() || beta <= T::zero() {
            return Err(Error::invalid("beta", format!("{beta} is not positive")));
        }
        Ok(ModelParams {
            graph,
            lambda,
            a,
            beta,
        })
    }

    pub fn graph(&self) -> &InterferenceGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<InterferenceGraph> {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// Sum of the arrival rates.
    pub fn total_arrival(&self) -> T {
        self.lambda.iter().copied().sum()
    }

    /// Same model with different arrival rates.
    pub fn with_lambda(&self, lambda: Vec<T>) -> Result<Self> {
        Self::with_beta(self.graph.clone(), lambda, self.a, self.beta)
    }

    fn check_queue(&self, q: &[T]) -> Result<()> {
        if q.len() != self.node_count() {
            return Err(Error::LengthMismatch {
                what: "queue vector",
                expected: self.node_count(),
                got: q.len(),
            });
        }
        if let Some((v, x)) = q
            .iter()
            .enumerate()
            .find(|(_, x)| !x.is_finite() || **x < T::zero())
        {
            return Err(Error::Domain(format!("queue entry {v} is {x}")));
        }
        Ok(())
    }
}

/// Activation rate `(x+1)^a / (1 + (x+1)^a)`.
#[inline]
pub fn psi_plus<T: Scalar>(x: T, a: T) -> T {
    T::one() / (T::one() + (x + T::one()).powf(-a))
}

/// Deactivation rate `1 - psi_plus(x, a)`.
#[inline]
pub fn psi_minus<T: Scalar>(x: T, a: T) -> T {
    T::one() / (T::one() + (x + T::one()).powf(a))
}

/// A probability distribution over the stable sets of a graph, stored in
/// catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDistribution<T> {
    graph: Arc<InterferenceGraph>,
    probs: Vec<T>,
}

impl<T: Scalar> ScheduleDistribution<T> {
    pub fn probabilities(&self) -> &[T] {
        &self.probs
    }

    pub fn schedules(&self) -> &[Schedule] {
        self.graph.stable_sets().all_sets()
    }

    /// Probability of `s`; zero for schedules outside the stable sets.
    pub fn prob(&self, s: Schedule) -> T {
        self.graph
            .stable_sets()
            .index_of(s)
            .map_or(T::zero(), |i| self.probs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Schedule, T)> + '_ {
        self.schedules().iter().copied().zip(self.probs.iter().copied())
    }

    /// Probability that node `v` is active.
    pub fn marginal(&self, v: usize) -> T {
        self.iter()
            .filter(|(s, _)| s.is_active(v))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn marginals(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.graph.node_count()];
        for (s, p) in self.iter() {
            for v in s.active_nodes() {
                m[v] += p;
            }
        }
        m
    }

    /// Expectation of a function given in catalog order.
    pub fn expectation(&self, f: &[T]) -> T {
        self.probs.iter().zip(f).map(|(&p, &x)| p * x).sum()
    }
}

/// Normalizes log-weights by subtracting the maximum before exponentiating.
fn normalize_log_weights<T: Scalar>(log_w: &[T]) -> Option<Vec<T>> {
    let max = log_w
        .iter()
        .copied()
        .fold(T::neg_infinity(), |m, x| m.max(x));
    if !max.is_finite() {
        return None;
    }
    let w: Vec<T> = log_w.iter().map(|&x| (x - max).exp()).collect();
    let total: T = w.iter().copied().sum();
    Some(w.into_iter().map(|x| x / total).collect())
}

/// Reversible law of the schedule process at queue lengths `q`.
pub fn stationary_measure<T: Scalar>(
    params: &ModelParams<T>,
    q: &[T],
) -> Result<ScheduleDistribution<T>> {
    params.check_queue(q)?;
    let log_unit: Vec<T> = q
        .iter()
        .map(|&x| params.a * (x + T::one()).ln())
        .collect();
    let log_w: Vec<T> = params
        .graph
        .stable_sets()
        .all_sets()
        .iter()
        .map(|s| s.active_nodes().map(|v| log_unit[v]).sum())
        .collect();
    let probs = normalize_log_weights(&log_w).expect("empty schedule has finite weight");
    Ok(ScheduleDistribution {
        graph: params.graph.clone(),
        probs,
    })
}

/// Per-node probability of being active under the stationary law at `q`.
pub fn mean_service_rate_exact<T: Scalar>(params: &ModelParams<T>, q: &[T]) -> Result<Vec<T>> {
    Ok(stationary_measure(params, q)?.marginals())
}

/// Limit of the service rates at `N q` as `N` grows: only maximum stable
/// sets carry mass, with weight `prod_{v in s} q_v^a`.
///
/// Zero coordinates are allowed; maximum sets containing them get weight 0.
pub fn asymptotic_service_rate<T: Scalar>(params: &ModelParams<T>, q: &[T]) -> Result<Vec<T>> {
    params.check_queue(q)?;
    if q.iter().all(|&x| x == T::zero()) {
        return Err(Error::Domain(
            "asymptotic service rate is undefined at the zero queue vector".into(),
        ));
    }
    let catalog = params.graph.stable_sets();
    let log_q: Vec<T> = q.iter().map(|&x| x.ln()).collect();
    let maximum: Vec<Schedule> = catalog.maximum_sets().collect();
    let log_w: Vec<T> = maximum
        .iter()
        .map(|s| {
            s.active_nodes()
                .map(|v| {
                    if q[v] == T::zero() {
                        T::neg_infinity()
                    } else {
                        params.a * log_q[v]
                    }
                })
                .sum()
        })
        .collect();
    let w = normalize_log_weights(&log_w).ok_or_else(|| {
        Error::Domain(format!(
            "every maximum stable set contains an empty queue at q = {q:?}"
        ))
    })?;
    let mut rate = vec![T::zero(); q.len()];
    for (s, p) in maximum.iter().zip(w) {
        for v in s.active_nodes() {
            rate[v] += p;
        }
    }
    Ok(rate)
}

/// Fluid drift `lambda - asymptotic_service_rate(q)`.
pub fn fluid_drift<T: Scalar>(params: &ModelParams<T>, q: &[T]) -> Result<Vec<T>> {
    let service = asymptotic_service_rate(params, q)?;
    Ok(params
        .lambda
        .iter()
        .zip(service)
        .map(|(&l, s)| l - s)
        .collect())
}

/// Dense generator of the schedule process at frozen `q`, in catalog order.
#[derive(Debug, Clone)]
pub struct Generator<T> {
    dim: usize,
    /// Row-major; off-diagonal entries are jump rates, rows sum to zero.
    entries: Vec<T>,
}

impl<T: Scalar> Generator<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, from: usize, to: usize) -> T {
        self.entries[from * self.dim + to]
    }

    /// `(L h)(s) = sum_t L(s, t) h(t)`.
    pub fn apply(&self, h: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|i| {
                // rows sum to zero, so write it as a sum of differences
                let hi = h[i];
                (0..self.dim)
                    .filter(|&j| j != i)
                    .map(|j| self.entries[i * self.dim + j] * (h[j] - hi))
                    .sum()
            })
            .collect()
    }
}

pub fn generator<T: Scalar>(params: &ModelParams<T>, q: &[T]) -> Result<Generator<T>> {
    params.check_queue(q)?;
    let g = &params.graph;
    let catalog = g.stable_sets();
    let dim = catalog.len();
    let mut entries = vec![T::zero(); dim * dim];
    for (i, &s) in catalog.all_sets().iter().enumerate() {
        let mut out = T::zero();
        for v in 0..g.node_count() {
            let (target, rate) = if s.is_active(v) {
                (s.without(v), psi_minus(q[v], params.a))
            } else if g.can_activate(s, v) {
                (s.with(v), psi_plus(q[v], params.a))
            } else {
                continue;
            };
            let j = catalog.index_of(target).expect("neighbor schedule is stable");
            entries[i * dim + j] = rate;
            out += rate;
        }
        entries[i * dim + i] = -out;
    }
    Ok(Generator { dim, entries })
}

/// Spectral gap of the schedule generator at frozen `q`.
///
/// Reversibility makes `D^{1/2} L D^{-1/2}` symmetric (`D = diag(pi)`); its
/// off-diagonal entries are `sqrt(L(s,t) L(t,s))`, which avoids forming
/// `pi` explicitly. The gap is the second-smallest eigenvalue of `-L`.
pub fn spectral_gap<T: Scalar>(params: &ModelParams<T>, q: &[T]) -> Result<T> {
    let gen = generator(params, q)?;
    let dim = gen.dim;
    let mut sym = vec![T::zero(); dim * dim];
    for i in 0..dim {
        sym[i * dim + i] = -gen.entry(i, i);
        for j in i + 1..dim {
            let x = -(gen.entry(i, j) * gen.entry(j, i)).sqrt();
            sym[i * dim + j] = x;
            sym[j * dim + i] = x;
        }
    }
    let scale = (0..dim)
        .map(|i| sym[i * dim + i])
        .fold(T::zero(), |m, x| m.max(x));
    let eig = linalg::symmetric_eigenvalues(sym, dim)?;
    let zero_tol = T::tolerance().sqrt() * scale;
    if eig[0].abs() > zero_tol {
        return Err(Error::Numerical(format!(
            "smallest eigenvalue {:e} of the negated generator is not zero (tolerance {:e}); q = {:?}",
            eig[0].to_f64_lossy(),
            zero_tol.to_f64_lossy(),
            q
        )));
    }
    let gap = eig[1];
    if gap <= zero_tol {
        return Err(Error::Numerical(format!(
            "spectral gap {:e} is not positive (tolerance {:e}); eigenvalues near zero are unresolved",
            gap.to_f64_lossy(),
            zero_tol.to_f64_lossy()
        )));
    }
    Ok(gap)
}

/// Solution of `L phi = 1{s_v = 1} - pi(s_v = 1)`, centered under `pi`.
#[derive(Debug, Clone)]
pub struct PoissonSolution<T> {
    pub node: usize,
    /// Values in catalog order.
    pub phi: Vec<T>,
    /// `max_s |L phi(s) - (s_v - pi(s_v = 1))|`.
    pub residual: T,
    /// `pi[phi]` after centering.
    pub mean: T,
}

pub fn poisson_solve<T: Scalar>(
    params: &ModelParams<T>,
    q: &[T],
    v: usize,
) -> Result<PoissonSolution<T>> {
    if v >= params.node_count() {
        return Err(Error::invalid(
            "node",
            format!("{v} is not a node of a {}-node graph", params.node_count()),
        ));
    }
    let pi = stationary_measure(params, q)?;
    let gen = generator(params, q)?;
    let dim = gen.dim;
    let mv = pi.marginal(v);
    let rhs: Vec<T> = pi
        .schedules()
        .iter()
        .map(|s| if s.is_active(v) { T::one() - mv } else { -mv })
        .collect();

    // The balance rows are linearly dependent (pi^T L = 0); the row with the
    // largest pi-weight is replaced by the centering constraint.
    let probs = pi.probabilities();
    let replaced = (0..dim)
        .max_by(|&i, &j| probs[i].partial_cmp(&probs[j]).expect("finite"))
        .expect("non-empty catalog");
    let mut system = gen.entries.clone();
    let mut b = rhs.clone();
    system[replaced * dim..(replaced + 1) * dim].copy_from_slice(probs);
    b[replaced] = T::zero();

    let mut phi = linalg::solve(system.clone(), b.clone(), dim)?;
    // one step of iterative refinement
    let r: Vec<T> = (0..dim)
        .map(|i| {
            b[i] - (0..dim)
                .map(|j| system[i * dim + j] * phi[j])
                .sum::<T>()
        })
        .collect();
    let correction = linalg::solve(system, r, dim)?;
    for (p, c) in phi.iter_mut().zip(correction) {
        *p += c;
    }

    let shift = pi.expectation(&phi);
    for p in phi.iter_mut() {
        *p -= shift;
    }
    let applied = gen.apply(&phi);
    let residual = applied
        .iter()
        .zip(&rhs)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()));
    let mean = pi.expectation(&phi);
    Ok(PoissonSolution {
        node: v,
        phi,
        residual,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(g: InterferenceGraph, lambda: Vec<f64>, a: f64) -> ModelParams<f64> {
        ModelParams::new(Arc::new(g), lambda, a).unwrap()
    }

    fn k2(a: f64) -> ModelParams<f64> {
        params(InterferenceGraph::complete(2).unwrap(), vec![0.3, 0.3], a)
    }

    #[test]
    fn rate_functions() {
        for a in [0.1, 0.5, 1.0, 3.0] {
            assert_eq!(psi_plus(0.0, a), 0.5);
        }
        assert_relative_eq!(psi_plus(3.0, 1.0), 0.8, epsilon = 1e-15);
        for x in [0.0, 1.0, 17.0, 1e6] {
            assert_relative_eq!(psi_plus(x, 0.7) + psi_minus(x, 0.7), 1.0, epsilon = 1e-15);
        }
        assert_eq!(psi_plus(5.0, 0.0), 0.5);
    }

    #[test]
    fn default_beta_by_topology() {
        assert_eq!(k2(0.5).beta(), 1.0);
        let p = params(InterferenceGraph::cycle(4).unwrap(), vec![0.1; 4], 0.5);
        assert_eq!(p.beta(), 10.0);
    }

    #[test]
    fn parameter_validation() {
        let g = Arc::new(InterferenceGraph::complete(2).unwrap());
        assert!(matches!(
            ModelParams::new(g.clone(), vec![0.1], 0.5),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(ModelParams::new(g.clone(), vec![0.1, -0.1], 0.5).is_err());
        assert!(ModelParams::new(g.clone(), vec![0.1, 0.1], -1.0).is_err());
        assert!(ModelParams::with_beta(g, vec![0.1, 0.1], 0.5, 0.0).is_err());
    }

    #[test]
    fn stationary_measure_on_two_node_complete_graph() {
        let p = k2(0.5);
        let pi = stationary_measure(&p, &[3.0, 0.0]).unwrap();
        assert_relative_eq!(pi.prob(Schedule::EMPTY), 0.25, epsilon = 1e-15);
        assert_relative_eq!(pi.prob(Schedule::singleton(0)), 0.5, epsilon = 1e-15);
        assert_relative_eq!(pi.prob(Schedule::singleton(1)), 0.25, epsilon = 1e-15);
        assert_eq!(pi.prob(Schedule(0b11)), 0.0);
        let m = mean_service_rate_exact(&p, &[3.0, 0.0]).unwrap();
        assert_relative_eq!(m[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(m[1], 0.25, epsilon = 1e-15);
        assert!(matches!(
            stationary_measure(&p, &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn single_node_service_rate() {
        let p = params(InterferenceGraph::edgeless(1).unwrap(), vec![0.2], 0.7);
        for q in [0.0f64, 2.0, 50.0] {
            let w: f64 = (1.0 + q).powf(0.7);
            let m = mean_service_rate_exact(&p, &[q]).unwrap();
            assert_relative_eq!(m[0], w / (1.0 + w), epsilon = 1e-15);
        }
    }

    #[test]
    fn symmetric_queues_give_symmetric_mass() {
        let p = params(InterferenceGraph::cycle(4).unwrap(), vec![0.1; 4], 0.6);
        let pi = stationary_measure(&p, &[2.0, 5.0, 2.0, 5.0]).unwrap();
        // rotation by two is an automorphism fixing q
        for (s, prob) in pi.iter() {
            let rotated = Schedule(((s.0 << 2) | (s.0 >> 2)) & 0b1111);
            assert_relative_eq!(pi.prob(rotated), prob, epsilon = 1e-15);
        }
    }

    #[test]
    fn huge_queues_do_not_overflow() {
        let p = params(InterferenceGraph::complete(3).unwrap(), vec![0.1; 3], 4.0);
        let pi = stationary_measure(&p, &[1e6, 2e6, 3e6]).unwrap();
        let total: f64 = pi.probabilities().iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        assert!(pi.probabilities().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn asymptotic_rates() {
        let p = k2(0.5);
        assert_eq!(asymptotic_service_rate(&p, &[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(asymptotic_service_rate(&p, &[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert!(matches!(
            asymptotic_service_rate(&p, &[0.0, 0.0]),
            Err(Error::Domain(_))
        ));
        let c4 = params(InterferenceGraph::cycle(4).unwrap(), vec![0.1; 4], 0.5);
        let r = asymptotic_service_rate(&c4, &[1.0; 4]).unwrap();
        for x in r {
            assert_relative_eq!(x, 0.5, epsilon = 1e-15);
        }
        // both maximum sets contain an empty queue
        assert!(asymptotic_service_rate(&c4, &[1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn square_graph_rates_match_closed_form() {
        let a = 0.4;
        let c4 = params(InterferenceGraph::cycle(4).unwrap(), vec![0.1; 4], a);
        let q = [1.5, 0.7, 2.0, 0.3];
        let r = asymptotic_service_rate(&c4, &q).unwrap();
        let even = (q[0] * q[2]).powf(a);
        let odd = (q[1] * q[3]).powf(a);
        assert_relative_eq!(r[0], even / (even + odd), epsilon = 1e-14);
        assert_relative_eq!(r[2], even / (even + odd), epsilon = 1e-14);
        assert_relative_eq!(r[1], odd / (even + odd), epsilon = 1e-14);
    }

    #[test]
    fn drift_examples() {
        let p = k2(0.25);
        let d = fluid_drift(&p, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(d[0], -0.2, epsilon = 1e-15);
        assert_relative_eq!(d[1], -0.2, epsilon = 1e-15);
        let d = fluid_drift(&p, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(d[0], -0.7, epsilon = 1e-15);
        assert_relative_eq!(d[1], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn gap_examples() {
        let single = params(InterferenceGraph::edgeless(1).unwrap(), vec![0.1], 0.8);
        for q in [0.0, 3.0, 100.0] {
            assert_relative_eq!(spectral_gap(&single, &[q]).unwrap(), 1.0, epsilon = 1e-12);
        }
        // 3x3 generator with all rates 1/2: eigenvalues of -L are 0, 1/2, 3/2
        assert_relative_eq!(spectral_gap(&k2(0.5), &[0.0, 0.0]).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn gap_in_single_precision() {
        let g = Arc::new(InterferenceGraph::complete(2).unwrap());
        let p = ModelParams::<f32>::new(g, vec![0.3, 0.3], 0.5).unwrap();
        let gap = spectral_gap(&p, &[0.0, 0.0]).unwrap();
        assert!((gap - 0.5).abs() < 1e-5);
    }

    #[test]
    fn poisson_single_node() {
        let p = params(InterferenceGraph::edgeless(1).unwrap(), vec![0.1], 1.3);
        let sol = poisson_solve(&p, &[0.0], 0).unwrap();
        assert_relative_eq!(sol.phi[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(sol.phi[1], -0.5, epsilon = 1e-14);
        assert!(sol.residual < 1e-14);
        assert!(poisson_solve(&p, &[0.0], 1).is_err());
    }

    /// Eigenvalues of a reversible generator through a route independent of
    /// Jacobi: power iteration on `I + L / c` deflated against constants in
    /// the `pi`-weighted inner product.
    fn gap_by_power_iteration(p: &ModelParams<f64>, q: &[f64]) -> f64 {
        let gen = generator(p, q).unwrap();
        let pi = stationary_measure(p, q).unwrap();
        let w = pi.probabilities();
        let dim = gen.dim();
        let c = (0..dim).map(|i| -gen.entry(i, i)).fold(0.0, f64::max) * 1.01;
        let mut h: Vec<f64> = (0..dim).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let mut rate = 0.0;
        for _ in 0..20000 {
            let mean: f64 = h.iter().zip(w).map(|(x, p)| x * p).sum();
            h.iter_mut().for_each(|x| *x -= mean);
            let norm = h.iter().zip(w).map(|(x, p)| x * x * p).sum::<f64>().sqrt();
            h.iter_mut().for_each(|x| *x /= norm);
            let lh = gen.apply(&h);
            let next: Vec<f64> = h.iter().zip(&lh).map(|(x, y)| x + y / c).collect();
            rate = h.iter().zip(&next).zip(w).map(|((x, y), p)| x * y * p).sum::<f64>();
            h = next;
        }
        (1.0 - rate) * c
    }

    #[test]
    fn gap_agrees_with_power_iteration() {
        let p = params(InterferenceGraph::path(3).unwrap(), vec![0.1; 3], 0.5);
        for q in [[0.0, 0.0, 0.0], [3.0, 1.0, 7.0]] {
            let jacobi = spectral_gap(&p, &q).unwrap();
            let power = gap_by_power_iteration(&p, &q);
            assert_relative_eq!(jacobi, power, epsilon = 1e-6);
        }
    }

    fn small_graph() -> impl Strategy<Value = InterferenceGraph> {
        (1usize..=6).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> =
                (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            proptest::collection::vec(any::<bool>(), pairs.len()).prop_map(move |mask| {
                let edges: Vec<_> = pairs
                    .iter()
                    .zip(mask)
                    .filter(|(_, k)| *k)
                    .map(|(e, _)| *e)
                    .collect();
                InterferenceGraph::new(n, &edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn detailed_and_full_balance(g in small_graph(), raw in proptest::collection::vec(0.0f64..50.0, 6), a in 0.05f64..2.0) {
            let n = g.node_count();
            let q = &raw[..n];
            let p = params(g, vec![0.1; n], a);
            let pi = stationary_measure(&p, q).unwrap();
            let gen = generator(&p, q).unwrap();
            let sets = pi.schedules().to_vec();
            for (i, &s) in sets.iter().enumerate() {
                for v in 0..n {
                    if p.graph().can_activate(s, v) {
                        let lhs = pi.prob(s) * psi_plus(q[v], a);
                        let rhs = pi.prob(s.with(v)) * psi_minus(q[v], a);
                        prop_assert!((lhs - rhs).abs() <= 1e-12);
                    }
                }
                let inflow: f64 = (0..sets.len()).filter(|&j| j != i).map(|j| pi.probabilities()[j] * gen.entry(j, i)).sum();
                let outflow = -pi.probabilities()[i] * gen.entry(i, i);
                prop_assert!((inflow - outflow).abs() <= 1e-10);
            }
        }

        #[test]
        fn asymptotic_rates_sum(g in small_graph(), raw in proptest::collection::vec(0.01f64..10.0, 6), a in 0.05f64..2.0) {
            let n = g.node_count();
            let complete = g.is_complete();
            let upsilon = g.stable_sets().upsilon() as f64;
            let p = params(g, vec![0.1; n], a);
            let r = asymptotic_service_rate(&p, &raw[..n]).unwrap();
            let total: f64 = r.iter().sum();
            if complete {
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
            prop_assert!(total <= upsilon + 1e-12);
        }

        #[test]
        fn service_rates_approach_their_limit(q in proptest::collection::vec(0.1f64..5.0, 3), a in 0.1f64..1.0) {
            let p = params(InterferenceGraph::path(3).unwrap(), vec![0.1; 3], a);
            let limit = asymptotic_service_rate(&p, &q).unwrap();
            let mut prev = f64::INFINITY;
            for scale in [10.0, 1e2, 1e3, 1e4] {
                let nq: Vec<f64> = q.iter().map(|x| x * scale).collect();
                let exact = mean_service_rate_exact(&p, &nq).unwrap();
                let err = exact.iter().zip(&limit).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                prop_assert!(err <= prev + 1e-15);
                prev = err;
            }
        }

        #[test]
        fn gap_is_invariant_under_automorphism(raw in proptest::collection::vec(0.0f64..20.0, 5), a in 0.1f64..1.5) {
            // reflection v -> 4 - v of the path on five nodes
            let p = params(InterferenceGraph::path(5).unwrap(), vec![0.1; 5], a);
            let mirrored: Vec<f64> = raw.iter().rev().copied().collect();
            let g1 = spectral_gap(&p, &raw).unwrap();
            let g2 = spectral_gap(&p, &mirrored).unwrap();
            prop_assert!((g1 - g2).abs() <= 1e-10 * g1.max(1.0));
        }

        #[test]
        fn poisson_residual_and_centering(g in small_graph(), raw in proptest::collection::vec(0.0f64..30.0, 6), a in 0.05f64..1.5, pick in any::<proptest::sample::Index>()) {
            let n = g.node_count();
            let p = params(g, vec![0.1; n], a);
            let sol = poisson_solve(&p, &raw[..n], pick.index(n)).unwrap();
            prop_assert!(sol.residual <= 1e-10, "residual {}", sol.residual);
            prop_assert!(sol.mean.abs() <= 1e-12);
        }
    }
}
