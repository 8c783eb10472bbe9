use super::observers::{GridSampler, MartingaleTracker};
use super::stopping::SampledPath;
use super::Trajectory;
use crate::error::{Error, Result};

/// `Q(N t) / N` sampled on a uniform scaled-time grid.
#[derive(Debug, Clone)]
pub struct ScaledPath<'a> {
    pub n_scale: u64,
    pub grid_step: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Upper bound on the sup distance between the grid samples (held
    /// constant between grid points) and the exact scaled path.
    pub sampling_bound: f64,
    pub source: &'a Trajectory,
}

/// Scales over the full recorded horizon `traj.horizon / N`.
pub fn scale(traj: &Trajectory, n_scale: u64, grid_step: f64) -> Result<ScaledPath<'_>> {
    scale_to(traj, n_scale, grid_step, traj.horizon / n_scale as f64)
}

/// Scales over `[0, scaled_horizon]`; the trajectory must reach raw time
/// `N * scaled_horizon`.
pub fn scale_to(traj: &Trajectory, n_scale: u64, grid_step: f64, scaled_horizon: f64) -> Result<ScaledPath<'_>> {
    if n_scale == 0 {
        return Err(Error::invalid("N", "scale must be positive"));
    }
    if !(grid_step > 0.0) {
        return Err(Error::invalid("grid_step", format!("{grid_step} is not positive")));
    }
    let needed = n_scale as f64 * scaled_horizon;
    if needed > traj.horizon * (1.0 + 1e-12) {
        return Err(Error::InsufficientHorizon {
            needed,
            available: traj.horizon,
        });
    }
    let mut sampler = GridSampler::new(n_scale as f64, grid_step, scaled_horizon);
    traj.replay(&mut sampler)?;
    let (mut times, mut values, sampling_bound) = sampler.into_parts();
    let keep = times.iter().take_while(|&&t| t <= scaled_horizon * (1.0 + 1e-12)).count();
    times.truncate(keep);
    values.truncate(keep);
    Ok(ScaledPath {
        n_scale,
        grid_step,
        times,
        values,
        sampling_bound,
        source: traj,
    })
}

impl SampledPath for ScaledPath<'_> {
    fn times(&self) -> &[f64] {
        &self.times
    }
    fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Supremum of `|M|` over the scaled horizon, resolved at every event.
    pub sup_abs: f64,
    pub final_value: f64,
}

/// `M_v(t) = Q^N_v(t) - int_0^t (lambda_v - s^N_v(s) 1{Q^N_v(s) > 0}) ds`,
/// integrated exactly over the source trajectory.
pub fn martingale_path(scaled: &ScaledPath<'_>, v: usize) -> Result<MartingalePath> {
    let traj = scaled.source;
    if v >= traj.node_count() {
        return Err(Error::NodeOutOfRange(v, v, traj.node_count()));
    }
    let horizon = traj.horizon / scaled.n_scale as f64;
    let mut tracker = MartingaleTracker::new(v, traj.params.lambda()[v], scaled.n_scale as f64)
        .with_grid(scaled.grid_step, horizon);
    traj.replay(&mut tracker)?;
    let (times, values) = tracker.grid().expect("grid requested");
    let keep = scaled.times.len().min(times.len());
    Ok(MartingalePath {
        times: times[..keep].to_vec(),
        values: values[..keep].to_vec(),
        sup_abs: tracker.sup_abs(),
        final_value: tracker.final_value(),
    })
}
