use serde::Serialize;

use crate::error::{Error, Result};
use crate::Params;

/// Thresholds and time constants of the positivity argument for starts
/// with empty queues.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingConstants {
    /// Nodes with a positive start.
    pub v_prime: Vec<usize>,
    pub eps0: f64,
    /// Half of the strict upper bound.
    pub eps1: f64,
    /// The four terms of the minimum bounding `eps1` (the last is `+inf`
    /// when `min lambda >= 1`).
    pub eps1_terms: [f64; 4],
    pub k_time: f64,
    pub k_act: f64,
    /// `eps_0, eps_1, .., eps_m` with `m` the number of empty starts.
    pub eps_sequence: Vec<f64>,
    /// `K_time(1), .., K_time(m)`.
    pub k_time_sequence: Vec<f64>,
}

pub fn coupling_constants(q0: &[f64], params: &Params) -> Result<CouplingConstants> {
    let n = params.node_count();
    if q0.len() != n {
        return Err(Error::LengthMismatch {
            what: "q0",
            expected: n,
            got: q0.len(),
        });
    }
    if q0.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid("q0", "entries must be finite and nonnegative"));
    }
    let v_prime: Vec<usize> = (0..n).filter(|&v| q0[v] > 0.0).collect();
    if v_prime.is_empty() {
        return Err(Error::Domain(
            "no node starts with a positive queue; coupling constants need q0 != 0".into(),
        ));
    }
    let a = params.a();
    let lambda = params.lambda();
    let min_l = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let max_l = lambda.iter().copied().fold(0.0, f64::max);
    if !(min_l > 0.0) {
        return Err(Error::invalid("lambda", "all arrival rates must be positive"));
    }
    if !(a > 0.0) {
        return Err(Error::invalid("a", "must be positive"));
    }
    let q_inf = q0.iter().copied().fold(0.0, f64::max);
    let eps0 = v_prime.iter().map(|&v| q0[v]).fold(f64::INFINITY, f64::min);
    let nf = n as f64;

    let k_time_at = |k: i32, eps_prev: f64| {
        8f64.powf(1.0 + a) * nf * (2f64.powi(k - 1) * q_inf).powf(a) / (min_l * eps_prev.powf(a))
    };
    let terms_at = |k: i32, eps_prev: f64, kt: f64| {
        [
            1.0,
            2f64.powf(-1.0 - 1.0 / a) * min_l.powf(1.0 / a),
            2f64.powi(k) * q_inf / (max_l * eps_prev * kt),
            if min_l >= 1.0 {
                f64::INFINITY
            } else {
                1.0 / (kt * (1.0 - min_l))
            },
        ]
    };
    let next_eps = |eps_prev: f64, terms: &[f64; 4]| {
        // half of the strict bound
        0.5 * eps_prev / 2.0 * terms.iter().copied().fold(f64::INFINITY, f64::min)
    };

    let k_time = k_time_at(1, eps0);
    let eps1_terms = terms_at(1, eps0, k_time);
    let eps1 = next_eps(eps0, &eps1_terms);
    let k_act = eps1 * k_time / (nf * 4f64.powf(1.0 + a) * q_inf.powf(a));

    let m = n - v_prime.len();
    let mut eps_sequence = vec![eps0];
    let mut k_time_sequence = Vec::with_capacity(m);
    for k in 1..=m as i32 {
        let prev = *eps_sequence.last().expect("non-empty");
        let kt = k_time_at(k, prev);
        k_time_sequence.push(kt);
        eps_sequence.push(next_eps(prev, &terms_at(k, prev, kt)));
    }
    if m == 0 {
        eps_sequence.push(eps1);
        k_time_sequence.push(k_time);
    }
    Ok(CouplingConstants {
        v_prime,
        eps0,
        eps1,
        eps1_terms,
        k_time,
        k_act,
        eps_sequence,
        k_time_sequence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::InterferenceGraph;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn params(n: usize, lambda: Vec<f64>, a: f64) -> Params {
        Params::new(Arc::new(InterferenceGraph::complete(n).unwrap()), lambda, a).unwrap()
    }

    #[test]
    fn worked_example() {
        let p = params(2, vec![0.2, 0.2], 0.25);
        let c = coupling_constants(&[1.0, 0.0], &p).unwrap();
        assert_eq!(c.v_prime, vec![0]);
        assert_eq!(c.eps0, 1.0);
        // 8^{1.25} * 2 / 0.2
        let kt = 8f64.powf(1.25) * 2.0 / 0.2;
        assert!((c.k_time - kt).abs() < 1e-9);
        assert!((c.k_time - 134.543).abs() < 1e-3);
        // independent evaluation of the four terms
        let t2 = 2f64.powf(-5.0) * 0.2f64.powf(4.0);
        let t3 = 2.0 / (0.2 * kt);
        let t4 = 1.0 / (kt * 0.8);
        let bound = 0.5 * [1.0, t2, t3, t4].into_iter().fold(f64::INFINITY, f64::min);
        assert!((c.eps1 - bound / 2.0).abs() < 1e-18);
        assert!((c.eps1 - 1.25e-5).abs() < 1e-12);
        let kact = c.eps1 * kt / (2.0 * 4f64.powf(1.25));
        assert!((c.k_act - kact).abs() < 1e-15);
        assert_eq!(c.eps_sequence.len(), 2);
        assert_eq!(c.eps_sequence[1], c.eps1);
    }

    #[test]
    fn rejects_zero_start_and_large_rates_are_handled() {
        let p = params(2, vec![0.2, 0.2], 0.25);
        assert!(coupling_constants(&[0.0, 0.0], &p).is_err());
        let p = params(2, vec![1.5, 2.0], 0.5);
        let c = coupling_constants(&[1.0, 0.0], &p).unwrap();
        assert_eq!(c.eps1_terms[3], f64::INFINITY);
        assert!(c.eps1 > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn invariants(
            n in 2usize..6,
            a in 0.05f64..2.0,
            seed_q in proptest::collection::vec(0.0f64..5.0, 6),
            zeros in proptest::collection::vec(any::<bool>(), 6),
            lam in proptest::collection::vec(0.01f64..1.5, 6),
        ) {
            let mut q0: Vec<f64> = (0..n).map(|v| if zeros[v] { 0.0 } else { seed_q[v] + 0.01 }).collect();
            if q0.iter().all(|&x| x == 0.0) {
                q0[0] = 1.0;
            }
            let p = params(n, lam[..n].to_vec(), a);
            let c = coupling_constants(&q0, &p).unwrap();
            prop_assert!(c.eps1 < c.eps0 / 2.0);
            prop_assert!(c.k_time > 0.0);
            let q_inf = q0.iter().copied().fold(0.0, f64::max);
            let kact = c.eps1 * c.k_time / (n as f64 * 4f64.powf(1.0 + a) * q_inf.powf(a));
            prop_assert!((c.k_act - kact).abs() <= 1e-12 * kact.abs());
            prop_assert!(c.eps_sequence.windows(2).all(|w| w[1] < w[0]));
            prop_assert!(c.eps_sequence.windows(2).all(|w| w[1] < w[0] / 2.0));
        }
    }
}
