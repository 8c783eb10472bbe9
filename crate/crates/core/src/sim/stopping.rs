use crate::error::{Error, Result};

/// A vector path sampled on increasing times.
pub trait SampledPath {
    fn times(&self) -> &[f64];
    fn values(&self) -> &[Vec<f64>];
}

/// Owned sampled path.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl SampledPath for GridPath {
    fn times(&self) -> &[f64] {
        &self.times
    }
    fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

pub enum StoppingRule<'a> {
    /// First time `min_v x_v <= eps`.
    TauEps(f64),
    /// First time `min_v x_v >= eps`.
    TMinusEps(f64),
    /// First time the sup distance to `reference(t)` exceeds `radius`.
    Tube {
        reference: &'a dyn Fn(f64) -> Vec<f64>,
        radius: f64,
    },
    /// First time some coordinate leaves the open interval `(lower, upper)`.
    ExitBox { lower: f64, upper: f64 },
}

/// First grid time at which the rule fires, or `+inf`.
pub fn stopping_time<P: SampledPath + ?Sized>(path: &P, rule: &StoppingRule<'_>) -> Result<f64> {
    match *rule {
        StoppingRule::TauEps(eps) | StoppingRule::TMinusEps(eps) if !(eps >= 0.0) => {
            return Err(Error::invalid("eps", format!("{eps} is negative")));
        }
        StoppingRule::Tube { radius, .. } if !(radius > 0.0) => {
            return Err(Error::invalid("radius", format!("{radius} is not positive")));
        }
        StoppingRule::ExitBox { lower, upper } if !(lower > 0.0 && lower < upper) => {
            return Err(Error::invalid(
                "localization box",
                format!("need 0 < C- < C+, got ({lower}, {upper})"),
            ));
        }
        _ => {}
    }
    let fires = |t: f64, x: &[f64]| -> bool {
        let min = x.iter().copied().fold(f64::INFINITY, f64::min);
        match *rule {
            StoppingRule::TauEps(eps) => min <= eps,
            StoppingRule::TMinusEps(eps) => min >= eps,
            StoppingRule::Tube { reference, radius } => {
                let r = reference(t);
                x.iter().zip(&r).any(|(a, b)| (a - b).abs() > radius)
            }
            StoppingRule::ExitBox { lower, upper } => x.iter().any(|&y| y <= lower || y >= upper),
        }
    };
    Ok(path
        .times()
        .iter()
        .zip(path.values())
        .find(|(&t, x)| fires(t, x))
        .map_or(f64::INFINITY, |(&t, _)| t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(c: Vec<f64>) -> GridPath {
        GridPath {
            times: (0..=10).map(|k| k as f64 * 0.1).collect(),
            values: vec![c; 11],
        }
    }

    #[test]
    fn constant_paths() {
        let p = constant(vec![0.5, 0.3]);
        assert_eq!(stopping_time(&p, &StoppingRule::TauEps(0.2)).unwrap(), f64::INFINITY);
        assert_eq!(stopping_time(&p, &StoppingRule::TauEps(0.3)).unwrap(), 0.0);
        assert_eq!(stopping_time(&p, &StoppingRule::TMinusEps(0.3)).unwrap(), 0.0);
        assert_eq!(stopping_time(&p, &StoppingRule::TMinusEps(0.4)).unwrap(), f64::INFINITY);
        let reference = |_t: f64| vec![0.5, 0.3];
        let tube = StoppingRule::Tube {
            reference: &reference,
            radius: 1e-9,
        };
        assert_eq!(stopping_time(&p, &tube).unwrap(), f64::INFINITY);
        let bx = StoppingRule::ExitBox { lower: 0.1, upper: 1.0 };
        assert_eq!(stopping_time(&p, &bx).unwrap(), f64::INFINITY);
    }

    #[test]
    fn linear_path_hits() {
        let p = GridPath {
            times: (0..=10).map(|k| k as f64 * 0.1).collect(),
            values: (0..=10).map(|k| vec![1.0 - k as f64 * 0.1, 1.0]).collect(),
        };
        let t = stopping_time(&p, &StoppingRule::TauEps(0.25)).unwrap();
        assert!((t - 0.8).abs() < 1e-12);
        let bx = StoppingRule::ExitBox { lower: 0.5, upper: 1.5 };
        assert!((stopping_time(&p, &bx).unwrap() - 0.5).abs() < 1e-12);
        let zero = |_t: f64| vec![1.0, 1.0];
        let tube = StoppingRule::Tube {
            reference: &zero,
            radius: 0.35,
        };
        assert!((stopping_time(&p, &tube).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn invalid_rules() {
        let p = constant(vec![1.0]);
        let r = |_t: f64| vec![1.0];
        assert!(stopping_time(&p, &StoppingRule::Tube { reference: &r, radius: 0.0 }).is_err());
        assert!(stopping_time(&p, &StoppingRule::ExitBox { lower: 1.0, upper: 1.0 }).is_err());
        assert!(stopping_time(&p, &StoppingRule::ExitBox { lower: 0.0, upper: 1.0 }).is_err());
        assert!(stopping_time(&p, &StoppingRule::TauEps(-1.0)).is_err());
    }
}
