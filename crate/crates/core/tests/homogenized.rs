use std::sync::Arc;

use qbcsma::sim::{run, Dynamics, GridSampler, MartingaleTracker, NetworkState, SimRng};
use qbcsma::{InterferenceGraph, Params};
use rayon::prelude::*;

const N: u64 = 400;
const REPLICAS: u64 = 400;
const STEP: f64 = 0.01;

fn mean_path(p: &Params, dynamics: Dynamics, seed: u64) -> Vec<Vec<f64>> {
    let paths: Vec<Vec<Vec<f64>>> = (0..REPLICAS)
        .into_par_iter()
        .map(|r| {
            let mut rng = SimRng::for_replica(seed, r);
            let mut grid = GridSampler::new(N as f64, STEP, 1.0);
            run(p, &NetworkState::idle(vec![N, N]), N as f64, dynamics, &mut rng, &mut grid).unwrap();
            grid.into_parts().1
        })
        .collect();
    let len = paths[0].len();
    (0..len)
        .map(|k| {
            (0..2)
                .map(|v| paths.iter().map(|x| x[k][v]).sum::<f64>() / REPLICAS as f64)
                .collect()
        })
        .collect()
}

#[test]
fn homogenized_and_full_chains_agree_in_mean() {
    let g = Arc::new(InterferenceGraph::complete(2).unwrap());
    let p = Params::new(g, vec![0.3, 0.3], 0.25).unwrap();
    let full = mean_path(&p, Dynamics::Full, 1);
    let homo = mean_path(&p, Dynamics::Homogenized, 2);
    assert_eq!(full.len(), homo.len());
    let sup = full
        .iter()
        .zip(&homo)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    assert!(sup < 0.03, "sup distance of replica means {sup}");
}

#[test]
fn martingale_has_zero_mean_and_doob_bound() {
    // empty start so that M(0) = 0
    let g = Arc::new(InterferenceGraph::complete(2).unwrap());
    let p = Params::new(g, vec![0.3, 0.3], 0.25).unwrap();
    let out: Vec<(f64, f64)> = (0..300u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = SimRng::for_replica(3, r);
            let mut m = MartingaleTracker::new(0, 0.3, N as f64);
            run(&p, &NetworkState::idle(vec![0, 0]), N as f64, Dynamics::Full, &mut rng, &mut m).unwrap();
            (m.final_value(), m.sup_abs())
        })
        .collect();
    let k = out.len() as f64;
    let mean = out.iter().map(|x| x.0).sum::<f64>() / k;
    let var = out.iter().map(|x| (x.0 - mean).powi(2)).sum::<f64>() / (k - 1.0);
    assert!(mean.abs() <= 4.0 * (var / k).sqrt(), "mean {mean}, sd {}", var.sqrt());
    // bracket is at most (lambda + 1) T / N
    assert!(var <= 1.3 / N as f64, "var {var}");
    let sup_mean = out.iter().map(|x| x.1).sum::<f64>() / k;
    assert!(sup_mean <= 2.0 * (1.3 / N as f64).sqrt());
}
