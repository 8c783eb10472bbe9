//! Adaptive RK4 (step doubling) with exit detection.

use crate::error::{Error, Result};
use crate::measures::{fluid_drift, ModelParams};
use crate::scalar::Scalar;

const MAX_GROWTH: f64 = 4.0;
const MIN_SHRINK: f64 = 0.1;
const SAFETY: f64 = 0.9;
const BISECTIONS: usize = 80;

type SumLaw<'a, T> = Box<dyn Fn(T) -> T + 'a>;

pub(super) struct Integrator<'a, T: Scalar> {
    params: &'a ModelParams<T>,
    tol: T,
    delta: T,
    /// Closed-form coordinate sum; accepted states are rescaled onto it.
    sum_law: Option<SumLaw<'a, T>>,
    h: T,
    pub accepted: usize,
    pub rejected: usize,
}

impl<'a, T: Scalar> Integrator<'a, T> {
    pub fn new(params: &'a ModelParams<T>, tol: T, delta: T, sum_law: Option<SumLaw<'a, T>>) -> Self {
        Integrator {
            params,
            tol,
            delta,
            sum_law,
            h: T::lit(1e-3),
            accepted: 0,
            rejected: 0,
        }
    }

    fn drift(&self, q: &[T]) -> Option<Vec<T>> {
        if q.iter().any(|&x| !(x > T::zero())) {
            return None;
        }
        fluid_drift(self.params, q).ok()
    }

    /// One classic RK4 step; `None` if a stage leaves the open orthant.
    fn rk4(&self, q: &[T], k1: &[T], h: T) -> Option<Vec<T>> {
        let half = h / T::lit(2.0);
        let axpy = |k: &[T], s: T| -> Vec<T> { q.iter().zip(k).map(|(&x, &d)| x + s * d).collect() };
        let k2 = self.drift(&axpy(k1, half))?;
        let k3 = self.drift(&axpy(&k2, half))?;
        let k4 = self.drift(&axpy(&k3, h))?;
        let six = T::lit(6.0);
        let two = T::lit(2.0);
        let out: Vec<T> = (0..q.len())
            .map(|i| q[i] + h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
            .collect();
        out.iter().all(|x| x.is_finite()).then_some(out)
    }

    fn project(&self, t: T, q: &mut [T]) {
        if let Some(law) = &self.sum_law {
            let target = law(t);
            let s: T = q.iter().copied().sum();
            if target > T::zero() && s > T::zero() {
                let r = target / s;
                q.iter_mut().for_each(|x| *x *= r);
            }
        }
    }

    fn below_exit(&self, q: &[T]) -> bool {
        q.iter().any(|&x| !(x > self.delta))
    }

    /// Samples the solution from `q0` at `times` (starting at 0). After an
    /// exit the exit state is held; returns the exit time if any.
    pub fn sample(&mut self, q0: &[T], times: &[T]) -> Result<(Vec<Vec<T>>, Option<T>)> {
        let mut out = Vec::with_capacity(times.len());
        let mut q = q0.to_vec();
        let mut t = times[0];
        let mut exit = if self.below_exit(&q) { Some(t) } else { None };
        out.push(q.clone());
        for &target in &times[1..] {
            if exit.is_none() {
                exit = self.advance(&mut t, &mut q, target)?;
            }
            out.push(q.clone());
        }
        Ok((out, exit))
    }

    /// Advances `(t, q)` to `t_end` or to the exit crossing.
    fn advance(&mut self, t: &mut T, q: &mut Vec<T>, t_end: T) -> Result<Option<T>> {
        let two = T::lit(2.0);
        let fifteen = T::lit(15.0);
        while *t < t_end {
            let remaining = t_end - *t;
            let h = self.h.min(remaining);
            let floor = T::epsilon() * T::lit(64.0) * t.abs().max(T::one());
            if h < floor {
                if remaining <= floor {
                    *t = t_end;
                    break;
                }
                return Err(Error::StepUnderflow {
                    time: t.to_f64_lossy(),
                    state: q.iter().map(|x| x.to_f64_lossy()).collect(),
                });
            }
            let k1 = self
                .drift(q)
                .ok_or_else(|| Error::Numerical(format!("drift undefined at t = {t}")))?;
            let full = self.rk4(q, &k1, h);
            let half = h / two;
            let halves = self.rk4(q, &k1, half).and_then(|mid| {
                let k1m = self.drift(&mid)?;
                self.rk4(&mid, &k1m, half)
            });
            let (full, fine) = match (full, halves) {
                (Some(f), Some(g)) => (f, g),
                _ => {
                    self.rejected += 1;
                    self.h = h / T::lit(4.0);
                    continue;
                }
            };
            let err = full
                .iter()
                .zip(&fine)
                .map(|(&a, &b)| (a - b).abs())
                .fold(T::zero(), T::max)
                / fifteen;
            if err > self.tol {
                self.rejected += 1;
                let f = (T::lit(SAFETY) * (self.tol / err).powf(T::lit(0.2))).max(T::lit(MIN_SHRINK));
                self.h = h * f;
                continue;
            }
            let mut next: Vec<T> = fine
                .iter()
                .zip(&full)
                .map(|(&b, &a)| b + (b - a) / fifteen)
                .collect();
            let t_next = *t + h;
            self.project(t_next, &mut next);
            if self.below_exit(&next) {
                let (te, qe) = self.locate_exit(*t, q, &k1, h);
                *t = te;
                *q = qe;
                self.accepted += 1;
                return Ok(Some(te));
            }
            self.accepted += 1;
            *t = t_next;
            *q = next;
            let grow = if err > T::zero() {
                (T::lit(SAFETY) * (self.tol / err).powf(T::lit(0.2))).min(T::lit(MAX_GROWTH))
            } else {
                T::lit(MAX_GROWTH)
            };
            // keep the controller's step when the last step was clipped to the grid
            if h == self.h {
                self.h = h * grow;
            }
        }
        Ok(None)
    }

    /// Bisects the step length for the crossing of `delta` within `(0, h]`.
    fn locate_exit(&self, t: T, q: &[T], k1: &[T], h: T) -> (T, Vec<T>) {
        let mut lo = T::zero();
        let mut hi = h;
        let mut best = None;
        for _ in 0..BISECTIONS {
            let mid = (lo + hi) / T::lit(2.0);
            match self.rk4(q, k1, mid) {
                Some(mut y) => {
                    self.project(t + mid, &mut y);
                    if self.below_exit(&y) {
                        hi = mid;
                        best = Some(y);
                    } else {
                        lo = mid;
                    }
                }
                None => hi = mid,
            }
            if hi - lo <= T::epsilon() * (t + h).abs().max(T::one()) {
                break;
            }
        }
        let state = best
            .or_else(|| self.rk4(q, k1, lo))
            .unwrap_or_else(|| q.to_vec());
        (t + hi, state)
    }
}
