//! Replica summaries. Every statistic carries its replica count.

use serde::Serialize;

/// Location and dispersion of a sample; infinite entries (censored
/// observations) count toward quantiles but not toward the mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub finite: usize,
    pub mean: f64,
    pub std_err: f64,
    pub median: f64,
    pub p90: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
        let finite: Vec<f64> = sorted.iter().copied().filter(|x| x.is_finite()).collect();
        let k = finite.len() as f64;
        let mean = if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / k
        };
        let std_err = if finite.len() < 2 {
            f64::NAN
        } else {
            (finite.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
        };
        Summary {
            count: values.len(),
            finite: finite.len(),
            mean,
            std_err,
            median: quantile(&sorted, 0.5),
            p90: quantile(&sorted, 0.9),
            min: sorted.first().copied().unwrap_or(f64::NAN),
            max: sorted.last().copied().unwrap_or(f64::NAN),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let h = p * (len - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            if lo == hi || sorted[lo] == sorted[hi] {
                sorted[lo]
            } else {
                sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
            }
        }
    }
}

/// Empirical frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Frequency {
    pub count: usize,
    pub successes: usize,
    pub value: f64,
    pub std_err: f64,
}

impl Frequency {
    pub fn of<I: IntoIterator<Item = bool>>(outcomes: I) -> Self {
        let (mut count, mut successes) = (0, 0);
        for o in outcomes {
            count += 1;
            successes += o as usize;
        }
        let value = if count == 0 {
            f64::NAN
        } else {
            successes as f64 / count as f64
        };
        Frequency {
            count,
            successes,
            value,
            std_err: (value * (1.0 - value) / count as f64).sqrt(),
        }
    }
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_values() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(s.count, 4);
        assert_eq!(s.median, 2.5);
        assert!((s.p90 - 3.7).abs() < 1e-12);
        assert_eq!(s.mean, 2.5);
        assert!((s.std_err - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        let c = Summary::of(&[1.0, f64::INFINITY, 2.0]);
        assert_eq!(c.finite, 2);
        assert_eq!(c.median, 2.0);
        assert_eq!(c.max, f64::INFINITY);
    }

    #[test]
    fn frequency_and_fit() {
        let f = Frequency::of([true, false, true, true]);
        assert_eq!((f.count, f.successes, f.value), (4, 3, 0.75));
        let (m, b) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((m - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
    }
}
