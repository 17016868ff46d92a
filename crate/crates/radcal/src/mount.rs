//! Mounting-angle estimation from per-frame radar motion and gyro yaw rate.
//!
//! For a sensor at forward offset `x` on a rigid vehicle, the lateral
//! component of its velocity is fixed by the yaw rate alone:
//!
//! ```text
//! |v| * sin(beta + yaw) = omega * x
//! ```
//!
//! where `v` and `beta` are the radar-measured sensor velocity and its
//! direction (radar frame), and `yaw` is the unknown mounting angle. With a
//! gyro whose reading is `scale * omega + bias`, debiasing leaves the
//! per-frame relation `beta = asin(inverse_scale * chi) - yaw` with
//! `chi = measured_rate * x / |v|`. The solvers below estimate `yaw` (and,
//! where observable, `inverse_scale`) from many frames, weighting each one
//! by the inverse trace of its motion covariance.

use crate::error::{Error, Result};
use crate::geom::{Angle, Sym2, Vec2};
use crate::motion::MotionEstimate;
use serde::{Deserialize, Serialize};

/// Open-interval clamp applied to the arcsine argument.
pub const LATERAL_RATIO_CLAMP: f64 = 1.0 - 1e-9;

/// Floor on the covariance trace when forming observation weights, so that
/// noise-free frames get a large finite weight instead of dividing by zero.
const MIN_COVARIANCE_TRACE: f64 = 1e-12;

/// Everything one gated frame contributes to angle estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateralObservation {
    /// Timestamp (s).
    pub t: f64,
    /// Motion direction in the radar frame.
    pub direction: Angle,
    /// Debiased yaw rate times forward offset over speed; the arcsine
    /// argument, clamped to the open unit interval.
    pub lateral_ratio: f64,
    /// Inverse trace of the motion covariance; zero for sparse frames,
    /// which removes them from every solver.
    pub weight: f64,
    /// Estimated sensor speed (m/s).
    pub speed: f64,
    /// Whether the raw ratio fell outside the clamp interval.
    pub clamped: bool,
}

/// Output of an angle solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSolution {
    /// Estimated mounting yaw angle.
    pub yaw: Angle,
    /// Estimated reciprocal of the gyro scale factor (1 when not solved for).
    pub inverse_scale: f64,
    /// Number of observations with positive weight.
    pub frames_used: usize,
    /// Weight-averaged RMS of the per-frame angle residuals (rad).
    pub residual_rms: f64,
    /// False only when an iterative solver stopped at its iteration cap.
    pub converged: bool,
}

/// Builds the per-frame observation from a motion estimate and the debiased
/// gyro reading. `forward_offset` is the sensor's x-position on the vehicle.
///
/// A ratio outside the clamp interval (slow, hard-turning frames where the
/// lateral model saturates) is clamped and flagged rather than rejected.
pub fn lateral_observation(
    est: &MotionEstimate,
    debiased_rate: f64,
    forward_offset: f64,
) -> Result<LateralObservation> {
    if !debiased_rate.is_finite() || !forward_offset.is_finite() {
        return Err(Error::domain(
            "lateral_observation",
            "non-finite yaw rate or sensor offset",
        ));
    }
    let speed = est.velocity.norm();
    let direction = est.direction.ok_or(Error::InsufficientData {
        context: "lateral_observation",
        needed: 1,
        got: 0,
    })?;
    let raw = debiased_rate * forward_offset / speed;
    let clamped = raw.abs() > LATERAL_RATIO_CLAMP;
    let lateral_ratio = raw.clamp(-LATERAL_RATIO_CLAMP, LATERAL_RATIO_CLAMP);
    let weight = match est.covariance.trace() {
        t if t.is_finite() => 1.0 / t.max(MIN_COVARIANCE_TRACE),
        _ => 0.0,
    };
    Ok(LateralObservation {
        t: est.t,
        direction,
        lateral_ratio,
        weight,
        speed,
        clamped,
    })
}

/// One row of the linearized angle/scale system, expanded around unit
/// inverse scale: returns `(y, [u_yaw, u_scale])` with
/// `y = beta - asin(chi) + chi / sqrt(1 - chi^2)` and
/// `u = (-1, chi / sqrt(1 - chi^2))`.
pub fn linearized_row(lateral_ratio: f64, direction: Angle) -> Result<(f64, [f64; 2])> {
    if lateral_ratio.is_nan() || lateral_ratio.abs() >= 1.0 {
        return Err(Error::domain(
            "linearized_row",
            format!("lateral ratio {lateral_ratio} outside the open unit interval"),
        ));
    }
    let slope = lateral_ratio / (1.0 - lateral_ratio * lateral_ratio).sqrt();
    let y = direction.radians() - lateral_ratio.asin() + slope;
    Ok((y, [-1.0, slope]))
}

/// Joint weighted least-squares estimate of the mounting yaw and the
/// reciprocal gyro scale, from a single linearization at unit scale.
///
/// The yaw enters the model linearly, so the only linearization error is in
/// the scale direction and one step suffices for near-unit scale factors.
/// Needs at least three weighted observations and spread in the lateral
/// ratio; constant-ratio data cannot separate yaw from scale and yields an
/// [`Error::UnobservableScale`] directing callers to the weighted-mean
/// fallback.
pub fn solve_wlsq_angle(observations: &[LateralObservation]) -> Result<CalibrationSolution> {
    let mut normal = Sym2::ZERO;
    let mut rhs = (0.0, 0.0);
    let mut frames_used = 0usize;
    for obs in observations.iter().filter(|o| o.weight > 0.0) {
        let (y, [u0, u1]) = linearized_row(obs.lateral_ratio, obs.direction)?;
        let w = obs.weight;
        normal.xx += w * u0 * u0;
        normal.xy += w * u0 * u1;
        normal.yy += w * u1 * u1;
        rhs.0 += w * u0 * y;
        rhs.1 += w * u1 * y;
        frames_used += 1;
    }
    if frames_used < 3 {
        return Err(Error::InsufficientData {
            context: "solve_wlsq_angle",
            needed: 3,
            got: frames_used,
        });
    }
    let (yaw_raw, inverse_scale) =
        normal.solve(rhs).ok_or_else(|| Error::UnobservableScale {
            message: "lateral ratios show no spread across frames".into(),
        })?;
    let residual_rms = weighted_rms(observations, |obs| {
        let (y, [u0, u1]) = linearized_row(obs.lateral_ratio, obs.direction).expect("ratio < 1");
        y - (u0 * yaw_raw + u1 * inverse_scale)
    });
    Ok(CalibrationSolution {
        yaw: Angle::new(yaw_raw),
        inverse_scale,
        frames_used,
        residual_rms,
        converged: true,
    })
}

/// Weighted mean of the per-frame closed-form angles, with the gyro scale
/// fixed at one: `yaw = sum(w * (asin(chi) - beta)) / sum(w)`.
///
/// This is the fallback when the scale is unobservable (e.g. straight-line
/// driving, where every ratio is zero and each frame gives `-beta`).
pub fn solve_weighted_mean_angle(
    observations: &[LateralObservation],
) -> Result<CalibrationSolution> {
    let mut sum = 0.0;
    let mut weight_sum = 0.0;
    let mut frames_used = 0usize;
    for obs in observations.iter().filter(|o| o.weight > 0.0) {
        sum += obs.weight * (obs.lateral_ratio.asin() - obs.direction.radians());
        weight_sum += obs.weight;
        frames_used += 1;
    }
    if frames_used == 0 {
        return Err(Error::InsufficientData {
            context: "solve_weighted_mean_angle",
            needed: 1,
            got: 0,
        });
    }
    let yaw_raw = sum / weight_sum;
    let residual_rms = weighted_rms(observations, |obs| {
        obs.lateral_ratio.asin() - obs.direction.radians() - yaw_raw
    });
    Ok(CalibrationSolution {
        yaw: Angle::new(yaw_raw),
        inverse_scale: 1.0,
        frames_used,
        residual_rms,
        converged: true,
    })
}

/// Closed-form weighted Procrustes rotation between paired velocity sets:
/// the angle rotating each `radar` vector onto its `predicted` counterpart,
/// minimizing the weighted squared mismatch.
pub fn solve_kabsch_angle(
    radar: &[Vec2],
    predicted: &[Vec2],
    weights: &[f64],
) -> Result<Angle> {
    if radar.len() != predicted.len() || radar.len() != weights.len() {
        return Err(Error::domain(
            "solve_kabsch_angle",
            format!(
                "mismatched inputs: {} radar, {} predicted, {} weights",
                radar.len(),
                predicted.len(),
                weights.len()
            ),
        ));
    }
    let mut sin_sum = 0.0;
    let mut cos_sum = 0.0;
    for ((r, p), &w) in radar.iter().zip(predicted).zip(weights) {
        sin_sum += w * r.cross(*p);
        cos_sum += w * r.dot(*p);
    }
    if sin_sum == 0.0 && cos_sum == 0.0 {
        return Err(Error::InsufficientData {
            context: "solve_kabsch_angle",
            needed: 1,
            got: 0,
        });
    }
    Ok(Angle::new(sin_sum.atan2(cos_sum)))
}

/// Sensor velocity predicted in the vehicle frame from the radar speed and
/// the gyro-derived lateral component `omega * x`: the longitudinal part is
/// whatever is left of the speed after the lateral share, assuming forward
/// travel.
pub fn predicted_from_lateral(speed: f64, lateral: f64) -> Vec2 {
    let longitudinal = (speed * speed - lateral * lateral).max(0.0).sqrt();
    Vec2::new(longitudinal, lateral)
}

/// Builds matched (radar, predicted, weight) velocity sets for the
/// Procrustes solver from lateral observations, applying `inverse_scale`
/// to the gyro channel (pass 1.0 for the single-pass variant).
pub fn kabsch_pairs(
    observations: &[LateralObservation],
    inverse_scale: f64,
) -> (Vec<Vec2>, Vec<Vec2>, Vec<f64>) {
    let mut radar = Vec::with_capacity(observations.len());
    let mut predicted = Vec::with_capacity(observations.len());
    let mut weights = Vec::with_capacity(observations.len());
    for obs in observations {
        let dir = obs.direction;
        radar.push(Vec2::new(obs.speed * dir.cos(), obs.speed * dir.sin()));
        let lateral = (inverse_scale * obs.lateral_ratio).clamp(-1.0, 1.0) * obs.speed;
        predicted.push(predicted_from_lateral(obs.speed, lateral));
        weights.push(obs.weight);
    }
    (radar, predicted, weights)
}

/// Orthogonal-distance fit of yaw and inverse scale, honoring noise in both
/// the direction (`sigma_direction`, rad) and the lateral ratio
/// (`sigma_ratio`). Gauss-Newton from the least-squares solution; each
/// observation is reweighted by the inverse of its effective variance
/// `sigma_direction^2 + (d asin / d chi)^2 * sigma_ratio^2`.
///
/// Converges when the parameter step drops below 1e-10; after 50 iterations
/// the best iterate is returned with `converged = false`.
pub fn solve_odr_angle(
    observations: &[LateralObservation],
    sigma_direction: f64,
    sigma_ratio: f64,
) -> Result<CalibrationSolution> {
    if sigma_direction.is_nan() || sigma_direction <= 0.0 || !sigma_ratio.is_finite() || sigma_ratio < 0.0 {
        return Err(Error::domain(
            "solve_odr_angle",
            format!("invalid noise levels sigma_direction={sigma_direction}, sigma_ratio={sigma_ratio}"),
        ));
    }
    let init = solve_wlsq_angle(observations)?;
    let mut yaw = init.yaw.radians();
    let mut inverse_scale = init.inverse_scale;
    let mut converged = false;

    for _ in 0..50 {
        let mut normal = Sym2::ZERO;
        let mut rhs = (0.0, 0.0);
        for obs in observations.iter().filter(|o| o.weight > 0.0) {
            let arg = (inverse_scale * obs.lateral_ratio)
                .clamp(-LATERAL_RATIO_CLAMP, LATERAL_RATIO_CLAMP);
            let root = (1.0 - arg * arg).sqrt();
            let d_chi = inverse_scale / root;
            let d_scale = obs.lateral_ratio / root;
            let residual = obs.direction.radians() - (arg.asin() - yaw);
            let q = obs.weight / (sigma_direction * sigma_direction
                + d_chi * d_chi * sigma_ratio * sigma_ratio);
            // Model Jacobian row is (-1, d_scale).
            normal.xx += q;
            normal.xy += -q * d_scale;
            normal.yy += q * d_scale * d_scale;
            rhs.0 += -q * residual;
            rhs.1 += q * d_scale * residual;
        }
        let Some((step_yaw, step_scale)) = normal.solve(rhs) else {
            break;
        };
        yaw += step_yaw;
        inverse_scale += step_scale;
        if step_yaw.abs().max(step_scale.abs()) < 1e-10 {
            converged = true;
            break;
        }
    }

    let frames_used = observations.iter().filter(|o| o.weight > 0.0).count();
    let residual_rms = weighted_rms(observations, |obs| {
        let arg = (inverse_scale * obs.lateral_ratio)
            .clamp(-LATERAL_RATIO_CLAMP, LATERAL_RATIO_CLAMP);
        obs.direction.radians() - (arg.asin() - yaw)
    });
    Ok(CalibrationSolution {
        yaw: Angle::new(yaw),
        inverse_scale,
        frames_used,
        residual_rms,
        converged,
    })
}

fn weighted_rms(
    observations: &[LateralObservation],
    residual: impl Fn(&LateralObservation) -> f64,
) -> f64 {
    let mut sum = 0.0;
    let mut weight_sum = 0.0;
    for obs in observations.iter().filter(|o| o.weight > 0.0) {
        let r = residual(obs);
        sum += obs.weight * r * r;
        weight_sum += obs.weight;
    }
    if weight_sum > 0.0 {
        (sum / weight_sum).sqrt()
    } else {
        0.0
    }
}
