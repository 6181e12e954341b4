use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean across replications with a 95% Student-t confidence half-width.
///
/// The half-width is infinite with a single replication and NaN when any
/// replication produced no observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                half_width: f64::NAN,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self {
                mean,
                half_width: f64::INFINITY,
            };
        }
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map(|d| d.inverse_cdf(0.975))
            .unwrap_or(f64::NAN);
        Self {
            mean,
            half_width: t * (var / n as f64).sqrt(),
        }
    }

    /// Whether `value` lies within `k` half-widths of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.half_width
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_half_width() {
        // t_{0.975, 4} = 2.776445
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(e.mean, 3.0);
        let expected = 2.776445 * (2.5f64 / 5.0).sqrt();
        assert!((e.half_width - expected).abs() < 1e-5);
        assert!(e.covers(3.0 + expected, 1.0));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(Estimate::from_samples(&[]).mean.is_nan());
        assert!(Estimate::from_samples(&[2.0]).half_width.is_infinite());
        assert_eq!(Estimate::from_samples(&[2.0, 2.0]).half_width, 0.0);
    }
}
