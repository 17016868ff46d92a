//! Gyroscope measurement model: scale, additive bias, and white noise on
//! the yaw-rate channel, plus bias estimation from stationary data.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One yaw-rate measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Timestamp (s).
    pub t: f64,
    /// Measured yaw rate (rad/s).
    pub yaw_rate: f64,
}

/// Affine-plus-noise model of the yaw-rate channel:
/// `measured = scale * true_rate + bias + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuModel {
    /// Multiplicative scale factor (dimensionless, close to 1).
    pub scale: f64,
    /// Additive bias (rad/s).
    pub bias: f64,
    /// Standard deviation of the white measurement noise (rad/s).
    pub noise_std: f64,
}

impl Default for ImuModel {
    fn default() -> Self {
        ImuModel {
            scale: 1.0,
            bias: 0.0,
            noise_std: 0.0,
        }
    }
}

impl ImuModel {
    /// Applies the measurement model to a true rate with an externally
    /// drawn noise value (pass 0.0 for a noise-free reading).
    pub fn measure(&self, true_rate: f64, noise: f64) -> f64 {
        self.scale * true_rate + self.bias + noise
    }
}

/// Estimates the gyro bias as the sample mean of the measured yaw rate over
/// stationary time windows (inclusive bounds).
///
/// While the vehicle is at rest the true rate is zero, so the mean of the
/// raw readings converges to the bias; the scale factor multiplies zero and
/// drops out.
pub fn estimate_bias(samples: &[ImuSample], windows: &[(f64, f64)]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in samples {
        if windows.iter().any(|&(a, b)| s.t >= a && s.t <= b) {
            sum += s.yaw_rate;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InsufficientData {
            context: "estimate_bias",
            needed: 1,
            got: 0,
        });
    }
    Ok(sum / n as f64)
}

/// Removes an estimated bias from a measured rate.
pub fn debias(measured: f64, bias: f64) -> f64 {
    measured - bias
}

/// Linearly interpolates the yaw rate at time `t` from sorted samples,
/// clamping outside the sampled span. Returns `None` for an empty slice.
pub fn yaw_rate_at(samples: &[ImuSample], t: f64) -> Option<f64> {
    let last = samples.last()?;
    if t >= last.t {
        return Some(last.yaw_rate);
    }
    let first = samples.first()?;
    if t <= first.t {
        return Some(first.yaw_rate);
    }
    // Index of the first sample with sample.t > t; its predecessor brackets t.
    let hi = samples.partition_point(|s| s.t <= t);
    let (a, b) = (&samples[hi - 1], &samples[hi]);
    if a.t == t || b.t == a.t {
        return Some(a.yaw_rate);
    }
    let f = (t - a.t) / (b.t - a.t);
    Some(a.yaw_rate + f * (b.yaw_rate - a.yaw_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn measurement_model_is_affine() {
        let model = ImuModel {
            scale: 1.02,
            bias: 0.01,
            noise_std: 0.0,
        };
        assert_relative_eq!(model.measure(0.5, 0.0), 0.52, epsilon = 1e-15);
        assert_eq!(ImuModel::default().measure(0.37, 0.0), 0.37);
    }

    #[test]
    fn bias_is_the_stationary_mean() {
        let samples: Vec<ImuSample> = [0.008, 0.012]
            .iter()
            .enumerate()
            .map(|(i, &w)| ImuSample {
                t: i as f64,
                yaw_rate: w,
            })
            .collect();
        let b = estimate_bias(&samples, &[(0.0, 1.0)]).unwrap();
        assert_relative_eq!(b, 0.010, epsilon = 1e-15);
    }

    #[test]
    fn bias_needs_at_least_one_sample_in_window() {
        let samples = [ImuSample {
            t: 5.0,
            yaw_rate: 0.01,
        }];
        assert!(estimate_bias(&samples, &[(0.0, 1.0)]).is_err());
        assert!(estimate_bias(&samples, &[]).is_err());
    }

    #[test]
    fn bias_shift_equivariance() {
        let samples: Vec<ImuSample> = (0..200)
            .map(|i| ImuSample {
                t: i as f64 * 0.01,
                yaw_rate: 0.002 * ((i * 37 % 17) as f64 - 8.0),
            })
            .collect();
        let windows = [(0.0, 2.0)];
        let base = estimate_bias(&samples, &windows).unwrap();
        let shifted: Vec<ImuSample> = samples
            .iter()
            .map(|s| ImuSample {
                t: s.t,
                yaw_rate: s.yaw_rate + 0.05,
            })
            .collect();
        let b = estimate_bias(&shifted, &windows).unwrap();
        assert_relative_eq!(b, base + 0.05, epsilon = 1e-12);
    }

    #[test]
    fn debias_inverts_the_bias_term_exactly() {
        let model = ImuModel {
            scale: 0.98,
            bias: -0.004,
            noise_std: 0.0,
        };
        for i in 0..100 {
            let w = -2.0 + i as f64 * 0.04;
            let measured = model.measure(w, 0.0);
            assert_relative_eq!(
                debias(measured, model.bias),
                model.scale * w,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn interpolation_hits_nodes_and_clamps() {
        let samples: Vec<ImuSample> = (0..5)
            .map(|i| ImuSample {
                t: i as f64,
                yaw_rate: (i * i) as f64,
            })
            .collect();
        assert_eq!(yaw_rate_at(&samples, 2.0), Some(4.0));
        assert_relative_eq!(yaw_rate_at(&samples, 2.5).unwrap(), 6.5);
        assert_eq!(yaw_rate_at(&samples, -1.0), Some(0.0));
        assert_eq!(yaw_rate_at(&samples, 9.0), Some(16.0));
        assert_eq!(yaw_rate_at(&[], 0.0), None);
    }
}
