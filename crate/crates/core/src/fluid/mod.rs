//! Fluid-limit ODE `q' = lambda - service(q)`.
//!
//! [`solve_general`] integrates until a coordinate reaches `delta_exit` and
//! holds the state afterwards. [`solve_complete`] handles complete graphs
//! from any nonnegative start: the coordinate sum follows its closed form
//! exactly, boundary starts are obtained as limits of perturbed interior
//! starts, and the subcritical solution is absorbed at the origin.

mod integrator;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::ModelParams;
use crate::scalar::Scalar;
use crate::sim::GridPath;

use integrator::Integrator;

/// Threshold below which a coordinate counts as having reached zero.
pub const DELTA_EXIT: f64 = 1e-9;

/// Perturbation sizes for boundary starts, relative to `max(s(q0), 1)`.
pub const BOUNDARY_EPS: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

/// Successive perturbed solutions are accepted once their sup distance on
/// `[BOUNDARY_T0, horizon]` is below this.
pub const BOUNDARY_ACCEPT: f64 = 1e-4;
pub const BOUNDARY_T0: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtensionMode {
    None,
    FrozenAfterExit,
    CompleteGraphReflected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidMetadata {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub local_tolerance: f64,
    pub delta_exit: f64,
    /// Perturbations tried for a boundary start, in order.
    pub boundary_eps: Vec<f64>,
    /// Sup distance between consecutive perturbed solutions.
    pub boundary_changes: Vec<f64>,
    /// Whether the last change met the acceptance tolerance.
    pub boundary_converged: Option<bool>,
}

/// Sampled fluid path on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidSolution<T> {
    pub times: Vec<T>,
    pub values: Vec<Vec<T>>,
    /// First time a coordinate reaches `delta_exit` (general graphs) or the
    /// coordinate sum reaches 0 (complete graphs); `+inf` if never.
    pub exit_time: T,
    pub extension_mode: ExtensionMode,
    pub metadata: FluidMetadata,
}

impl<T: Scalar> FluidSolution<T> {
    pub fn node_count(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> T {
        *self.times.last().expect("non-empty grid")
    }

    /// Linear interpolation on the grid, constant outside it.
    pub fn at(&self, t: T) -> Vec<T> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values[0].clone();
        }
        if k == self.times.len() {
            return self.values[k - 1].clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.values[k - 1]
            .iter()
            .zip(&self.values[k])
            .map(|(&a, &b)| a + w * (b - a))
            .collect()
    }

    pub fn sums(&self) -> Vec<T> {
        self.values.iter().map(|x| x.iter().copied().sum()).collect()
    }

    pub fn to_grid_path(&self) -> GridPath {
        GridPath {
            times: self.times.iter().map(|t| t.to_f64_lossy()).collect(),
            values: self
                .values
                .iter()
                .map(|x| x.iter().map(|y| y.to_f64_lossy()).collect())
                .collect(),
        }
    }

    /// CSV with header `t,q_0,..,q_{n-1},sum`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for v in 0..self.node_count() {
            write!(w, ",q_{v}")?;
        }
        writeln!(w, ",sum")?;
        for (t, x) in self.times.iter().zip(&self.values) {
            write!(w, "{t}")?;
            for y in x {
                write!(w, ",{y}")?;
            }
            writeln!(w, ",{}", x.iter().copied().sum::<T>())?;
        }
        Ok(())
    }
}

/// Grid and tolerance settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidOptions {
    /// Output spacing; defaults to the largest spacing not above `1e-3`
    /// that divides the horizon, capped at 10^5 intervals.
    pub output_step: Option<f64>,
    /// Absolute local error per step.
    pub local_tolerance: f64,
    pub delta_exit: f64,
}

impl Default for FluidOptions {
    fn default() -> Self {
        FluidOptions {
            output_step: None,
            local_tolerance: 1e-11,
            delta_exit: DELTA_EXIT,
        }
    }
}

fn output_grid<T: Scalar>(horizon: T, opts: &FluidOptions) -> Result<Vec<T>> {
    if !(horizon >= T::zero()) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", format!("{horizon} is not a finite nonnegative time")));
    }
    if horizon == T::zero() {
        return Ok(vec![T::zero()]);
    }
    let h = horizon.to_f64_lossy();
    let step = match opts.output_step {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::invalid("output_step", format!("{s} is not positive"))),
        None => 1e-3,
    };
    let intervals = ((h / step - 1e-9).ceil() as usize).clamp(1, 100_000);
    let dt = horizon / T::from_count(intervals);
    let mut times: Vec<T> = (0..intervals).map(|k| T::from_count(k) * dt).collect();
    times.push(horizon);
    Ok(times)
}

fn metadata<T: Scalar>(opts: &FluidOptions, integ: Option<&Integrator<'_, T>>) -> FluidMetadata {
    FluidMetadata {
        accepted_steps: integ.map_or(0, |i| i.accepted),
        rejected_steps: integ.map_or(0, |i| i.rejected),
        local_tolerance: opts.local_tolerance,
        delta_exit: opts.delta_exit,
        boundary_eps: Vec::new(),
        boundary_changes: Vec::new(),
        boundary_converged: None,
    }
}

/// Integrates from a strictly positive start on any graph; frozen after exit.
pub fn solve_general<T: Scalar>(params: &ModelParams<T>, q0: &[T], horizon: T) -> Result<FluidSolution<T>> {
    solve_general_with(params, q0, horizon, &FluidOptions::default())
}

pub fn solve_general_with<T: Scalar>(
    params: &ModelParams<T>,
    q0: &[T],
    horizon: T,
    opts: &FluidOptions,
) -> Result<FluidSolution<T>> {
    check_start(params, q0)?;
    let delta = T::lit(opts.delta_exit);
    if let Some(v) = q0.iter().position(|&x| !(x > delta)) {
        return Err(Error::invalid(
            "q0",
            format!("coordinate {v} is {} but must exceed the exit threshold {}", q0[v], opts.delta_exit),
        ));
    }
    let times = output_grid(horizon, opts)?;
    let mut integ = Integrator::new(params, T::lit(opts.local_tolerance), delta, None);
    let (values, exit) = integ.sample(q0, &times)?;
    let mode = if exit.is_some() {
        ExtensionMode::FrozenAfterExit
    } else {
        ExtensionMode::None
    };
    Ok(FluidSolution {
        times,
        values,
        exit_time: exit.unwrap_or(T::infinity()),
        extension_mode: mode,
        metadata: metadata(opts, Some(&integ)),
    })
}

fn check_start<T: Scalar>(params: &ModelParams<T>, q0: &[T]) -> Result<()> {
    if q0.len() != params.node_count() {
        return Err(Error::LengthMismatch {
            what: "q0",
            expected: params.node_count(),
            got: q0.len(),
        });
    }
    if let Some(v) = q0.iter().position(|&x| !(x >= T::zero()) || !x.is_finite()) {
        return Err(Error::invalid("q0", format!("coordinate {v} is {}", q0[v])));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    /// Time at which the coordinate sum reaches 0; `+inf` if never.
    #[serde(serialize_with = "serialize_time")]
    pub predicted_zero_time: f64,
    pub total_arrival: f64,
    pub initial_mass: f64,
}

fn serialize_time<S: serde::Serializer>(t: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if t.is_finite() {
        s.serialize_f64(*t)
    } else {
        s.serialize_str("inf")
    }
}

/// Sub/super/critical classification of a complete-graph system.
pub fn classify_regime<T: Scalar>(params: &ModelParams<T>, q0: &[T]) -> RegimeReport {
    let s_lambda = params.total_arrival().to_f64_lossy();
    let s_q: f64 = q0.iter().map(|x| x.to_f64_lossy()).sum();
    let (regime, zero) = if s_lambda < 1.0 {
        (Regime::Subcritical, s_q / (1.0 - s_lambda))
    } else if s_lambda > 1.0 {
        (Regime::Supercritical, f64::INFINITY)
    } else if s_q == 0.0 {
        (Regime::Critical, 0.0)
    } else {
        (Regime::Critical, f64::INFINITY)
    };
    RegimeReport {
        regime,
        predicted_zero_time: zero,
        total_arrival: s_lambda,
        initial_mass: s_q,
    }
}

/// Complete-graph fluid path from any nonnegative start.
pub fn solve_complete<T: Scalar>(params: &ModelParams<T>, q0: &[T], horizon: T) -> Result<FluidSolution<T>> {
    solve_complete_with(params, q0, horizon, &FluidOptions::default())
}

pub fn solve_complete_with<T: Scalar>(
    params: &ModelParams<T>,
    q0: &[T],
    horizon: T,
    opts: &FluidOptions,
) -> Result<FluidSolution<T>> {
    if !params.graph().is_complete() {
        return Err(Error::CompleteGraphRequired);
    }
    check_start(params, q0)?;
    let times = output_grid(horizon, opts)?;
    let n = q0.len();
    let s_q0: T = q0.iter().copied().sum();
    let drift_sum = params.total_arrival() - T::one();
    let zero_time = if drift_sum < T::zero() {
        s_q0 / -drift_sum
    } else if s_q0 == T::zero() && drift_sum == T::zero() {
        T::zero()
    } else {
        T::infinity()
    };
    if s_q0 == T::zero() && drift_sum <= T::zero() {
        return Ok(FluidSolution {
            values: vec![vec![T::zero(); n]; times.len()],
            times,
            exit_time: T::zero(),
            extension_mode: ExtensionMode::CompleteGraphReflected,
            metadata: metadata::<T>(opts, None),
        });
    }

    let delta = T::lit(opts.delta_exit);
    if q0.iter().all(|&x| x > delta) {
        let (values, integ) = complete_from(params, q0, s_q0, &times, opts)?;
        return Ok(FluidSolution {
            times,
            values,
            exit_time: zero_time,
            extension_mode: ExtensionMode::CompleteGraphReflected,
            metadata: metadata(opts, Some(&integ)),
        });
    }

    // boundary start: limit of interior starts q0 + eps 1
    let scale = s_q0.max(T::one());
    let t0 = T::lit(BOUNDARY_T0);
    let mut meta = metadata::<T>(opts, None);
    let mut previous: Option<Vec<Vec<T>>> = None;
    let mut converged = false;
    for &e in BOUNDARY_EPS.iter() {
        let eps = T::lit(e) * scale;
        let start: Vec<T> = q0.iter().map(|&x| x + eps).collect();
        let (values, integ) = complete_from(params, &start, s_q0, &times, opts)?;
        meta.accepted_steps += integ.accepted;
        meta.rejected_steps += integ.rejected;
        meta.boundary_eps.push(e * scale.to_f64_lossy());
        if let Some(prev) = &previous {
            let change = times
                .iter()
                .zip(prev.iter().zip(&values))
                .filter(|(&t, _)| t >= t0)
                .flat_map(|(_, (a, b))| a.iter().zip(b).map(|(&x, &y)| (x - y).abs()))
                .fold(T::zero(), T::max);
            meta.boundary_changes.push(change.to_f64_lossy());
            converged = change < T::lit(BOUNDARY_ACCEPT);
        }
        previous = Some(values);
        if converged {
            break;
        }
    }
    meta.boundary_converged = Some(converged);
    let mut values = previous.expect("at least one perturbation");
    values[0] = q0.to_vec();
    Ok(FluidSolution {
        times,
        values,
        exit_time: zero_time,
        extension_mode: ExtensionMode::CompleteGraphReflected,
        metadata: meta,
    })
}

/// Integrates a complete-graph system from an interior `start`, rescaling
/// each accepted state to the closed-form sum `max(target_s0 + (s(lambda) - 1) t, 0)`.
///
/// The drift only depends on the direction of `q`, so once a coordinate
/// falls to the exit threshold the direction is held and the sum follows
/// its closed form down to 0.
fn complete_from<'a, T: Scalar>(
    params: &'a ModelParams<T>,
    start: &[T],
    target_s0: T,
    times: &[T],
    opts: &FluidOptions,
) -> Result<(Vec<Vec<T>>, Integrator<'a, T>)> {
    let drift_sum = params.total_arrival() - T::one();
    let start_sum: T = start.iter().copied().sum();
    let sum_at = move |t: T| -> T { (target_s0 + drift_sum * t).max(T::zero()) };
    let raw_sum_at = move |t: T| -> T { start_sum + drift_sum * t };
    let delta = T::lit(opts.delta_exit);
    let mut integ = Integrator::new(params, T::lit(opts.local_tolerance), delta, Some(Box::new(raw_sum_at)));
    let (raw, _) = integ.sample(start, times)?;
    let values = times
        .iter()
        .zip(raw)
        .map(|(&t, x)| {
            let s: T = x.iter().copied().sum();
            let target = sum_at(t);
            if target <= T::zero() || s <= T::zero() {
                vec![T::zero(); x.len()]
            } else {
                x.iter().map(|&y| y * target / s).collect()
            }
        })
        .collect();
    Ok((values, integ))
}
