//! Per-frame radar ego-motion estimation from Doppler measurements.
//!
//! Every static scatterer constrains the sensor velocity `v` (radar frame)
//! through its bearing `a` and measured radial speed `d`:
//!
//! ```text
//! cos(a) * vx + sin(a) * vy + d = 0
//! ```
//!
//! with `d` signed positive when the range to the scatterer increases.
//! A weighted least-squares fit over one frame recovers `v`; RANSAC
//! weights reject moving targets and clutter beforehand.

use crate::error::{Error, Result};
use crate::geom::{motion_direction, Angle, Sym2, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A single radar detection in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Bearing in the radar frame.
    pub azimuth: Angle,
    /// Radial (Doppler) speed (m/s), positive when the range increases.
    pub doppler: f64,
    /// Range (m); carried through for consumers, unused by the solvers.
    pub range: f64,
    /// Return amplitude (dB); informational.
    pub amplitude: f64,
}

/// All detections sharing one measurement timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarFrame {
    /// Timestamp (s).
    pub t: f64,
    pub detections: Vec<Detection>,
}

/// Per-detection weights in `[0, 1]`, aligned with a frame's detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates that every weight is finite and within `[0, 1]`.
    pub fn new(weights: Vec<f64>) -> Result<WeightVector> {
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || !(0.0..=1.0).contains(&w) {
                return Err(Error::domain(
                    "WeightVector",
                    format!("weight {w} at index {i} outside [0, 1]"),
                ));
            }
        }
        Ok(WeightVector(weights))
    }

    pub fn ones(n: usize) -> WeightVector {
        WeightVector(vec![1.0; n])
    }

    pub fn zeros(n: usize) -> WeightVector {
        WeightVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }
}

/// Covariance of a per-frame velocity estimate. `Infinite` marks sparse
/// frames whose estimate should carry zero weight downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionCovariance {
    Finite(Sym2),
    Infinite,
}

impl MotionCovariance {
    pub fn is_infinite(&self) -> bool {
        matches!(self, MotionCovariance::Infinite)
    }

    /// Sum of the diagonal; `f64::INFINITY` for the sparse sentinel.
    pub fn trace(&self) -> f64 {
        match self {
            MotionCovariance::Finite(m) => m.trace(),
            MotionCovariance::Infinite => f64::INFINITY,
        }
    }
}

/// Velocity estimate for one radar frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionEstimate {
    /// Timestamp of the source frame (s).
    pub t: f64,
    /// Sensor velocity in the radar frame (m/s).
    pub velocity: Vec2,
    /// Direction of `velocity`; `None` when the estimate is exactly zero
    /// (stationary vehicle).
    pub direction: Option<Angle>,
    /// Weights the estimate was computed with.
    pub weights: WeightVector,
    /// Number of detections with weight at or above the inlier threshold.
    pub inlier_count: usize,
    pub covariance: MotionCovariance,
}

impl MotionEstimate {
    /// Sparse frames carry an infinite covariance and zero downstream weight.
    pub fn is_sparse(&self) -> bool {
        self.covariance.is_infinite()
    }
}

/// Radial speed a static scatterer at `azimuth` would show for sensor
/// velocity `v` (radar frame): `-(v . u)` with `u` the line-of-sight unit
/// vector.
pub fn predicted_doppler(v: Vec2, azimuth: Angle) -> f64 {
    -(v.x * azimuth.cos() + v.y * azimuth.sin())
}

/// Weighted least-squares sensor velocity from one frame.
///
/// Needs at least two detections with positive weight and bearing spread;
/// a frame whose weighted detections share one line of sight cannot
/// constrain both velocity components.
pub fn solve_wlsq_motion(frame: &RadarFrame, weights: &WeightVector) -> Result<Vec2> {
    if weights.len() != frame.detections.len() {
        return Err(Error::domain(
            "solve_wlsq_motion",
            format!(
                "{} weights for {} detections",
                weights.len(),
                frame.detections.len()
            ),
        ));
    }
    let active = weights.iter().filter(|&&w| w > 0.0).count();
    if active < 2 {
        return Err(Error::InsufficientData {
            context: "solve_wlsq_motion",
            needed: 2,
            got: active,
        });
    }
    let mut normal = Sym2::ZERO;
    let mut rhs = (0.0, 0.0);
    for (det, &w) in frame.detections.iter().zip(weights.iter()) {
        let (s, c) = (det.azimuth.sin(), det.azimuth.cos());
        normal.xx += w * c * c;
        normal.xy += w * c * s;
        normal.yy += w * s * s;
        rhs.0 += w * c * (-det.doppler);
        rhs.1 += w * s * (-det.doppler);
    }
    let (vx, vy) = normal.solve(rhs).ok_or_else(|| Error::SingularGeometry {
        context: "solve_wlsq_motion",
        message: "weighted detections share a single line of sight".into(),
    })?;
    Ok(Vec2::new(vx, vy))
}

/// RANSAC configuration for per-frame outlier rejection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Inlier gate on the absolute Doppler residual (m/s).
    pub doppler_threshold: f64,
    /// Number of two-point hypotheses to draw.
    pub iterations: u32,
    /// Minimum consensus size for a hypothesis to be accepted.
    pub min_inliers: usize,
    /// Base seed; each frame derives its own generator from this and its
    /// timestamp, so parallel and serial runs agree.
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            doppler_threshold: 0.2,
            iterations: 100,
            min_inliers: 5,
            seed: 0,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Binary inlier weights from two-point RANSAC on the Doppler model.
///
/// The best hypothesis is refined once by unit-weight least squares over
/// its consensus set; the returned weights mark detections whose residual
/// against the refined velocity stays within the Doppler threshold. When
/// no hypothesis reaches `min_inliers` the weights are all zero.
///
/// Deterministic: the generator is seeded from `cfg.seed` and the frame
/// timestamp, so the result does not depend on processing order.
pub fn ransac_weights(frame: &RadarFrame, cfg: &RansacConfig) -> Result<WeightVector> {
    let j = frame.detections.len();
    if j < 2 {
        return Err(Error::InsufficientData {
            context: "ransac_weights",
            needed: 2,
            got: j,
        });
    }
    let cos: Vec<f64> = frame.detections.iter().map(|d| d.azimuth.cos()).collect();
    let sin: Vec<f64> = frame.detections.iter().map(|d| d.azimuth.sin()).collect();
    let dop: Vec<f64> = frame.detections.iter().map(|d| d.doppler).collect();

    let residual = |v: Vec2, i: usize| cos[i] * v.x + sin[i] * v.y + dop[i];
    let count_within = |v: Vec2| {
        (0..j)
            .filter(|&i| residual(v, i).abs() <= cfg.doppler_threshold)
            .count()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ frame.t.to_bits()));
    let mut best: Option<(usize, Vec2)> = None;
    for _ in 0..cfg.iterations {
        let a = rng.gen_range(0..j);
        let mut b = rng.gen_range(0..j);
        while b == a {
            b = rng.gen_range(0..j);
        }
        // Exact two-point solve; det = sin(azimuth_b - azimuth_a).
        let det = cos[a] * sin[b] - sin[a] * cos[b];
        if det.abs() < 1e-9 {
            continue;
        }
        let v = Vec2::new(
            (sin[b] * -dop[a] - sin[a] * -dop[b]) / det,
            (cos[a] * -dop[b] - cos[b] * -dop[a]) / det,
        );
        let count = count_within(v);
        if best.is_none_or(|(n, _)| count > n) {
            best = Some((count, v));
            if count == j {
                break;
            }
        }
    }

    let hypothesis = match best {
        Some((count, v)) if count >= cfg.min_inliers => v,
        _ => return Ok(WeightVector::zeros(j)),
    };

    // One least-squares refinement over the consensus set, then a final
    // inlier test against the refined velocity.
    let consensus: Vec<f64> = (0..j)
        .map(|i| {
            if residual(hypothesis, i).abs() <= cfg.doppler_threshold {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let consensus = WeightVector::new(consensus).expect("binary weights are valid");
    let refined = solve_wlsq_motion(frame, &consensus).unwrap_or(hypothesis);
    let weights: Vec<f64> = (0..j)
        .map(|i| {
            if residual(refined, i).abs() <= cfg.doppler_threshold {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(WeightVector::new(weights).expect("binary weights are valid"))
}

/// Number of weights at or above the inlier threshold (boundary counts in).
pub fn count_inliers(weights: &WeightVector, inlier_threshold: f64) -> usize {
    weights.iter().filter(|&&w| w >= inlier_threshold).count()
}

/// Doppler residuals `cos(a)*vx + sin(a)*vy + d` for the masked detections.
pub fn doppler_residuals(frame: &RadarFrame, v: Vec2, mask: &[bool]) -> Result<Vec<f64>> {
    if mask.len() != frame.detections.len() {
        return Err(Error::domain(
            "doppler_residuals",
            format!(
                "{} mask entries for {} detections",
                mask.len(),
                frame.detections.len()
            ),
        ));
    }
    let eps: Vec<f64> = frame
        .detections
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(d, _)| d.azimuth.cos() * v.x + d.azimuth.sin() * v.y + d.doppler)
        .collect();
    if eps.is_empty() {
        return Err(Error::InsufficientData {
            context: "doppler_residuals",
            needed: 1,
            got: 0,
        });
    }
    Ok(eps)
}

/// Covariance of a velocity estimate from its inlier residuals.
///
/// `rows` holds `(cos a, sin a)` for the same inliers the residuals were
/// computed over; `total` is the full detection count of the frame. Frames
/// with at most two inliers, or whose inlier ratio falls below
/// `min_inlier_ratio`, are flagged sparse (`Infinite`) instead of getting
/// a meaningless sample variance.
pub fn motion_covariance(
    residuals: &[f64],
    rows: &[(f64, f64)],
    total: usize,
    min_inlier_ratio: f64,
) -> Result<MotionCovariance> {
    let l = residuals.len();
    if rows.len() != l {
        return Err(Error::domain(
            "motion_covariance",
            format!("{} rows for {} residuals", rows.len(), l),
        ));
    }
    if l <= 2 || (l as f64) < min_inlier_ratio * total as f64 {
        return Ok(MotionCovariance::Infinite);
    }
    let mut normal = Sym2::ZERO;
    for &(c, s) in rows {
        normal.xx += c * c;
        normal.xy += c * s;
        normal.yy += s * s;
    }
    let inv = normal.inverse().ok_or_else(|| Error::SingularGeometry {
        context: "motion_covariance",
        message: "inlier bearings share a single line of sight".into(),
    })?;
    let sse: f64 = residuals.iter().map(|e| e * e).sum();
    let sigma2 = sse / (l - 2) as f64;
    Ok(MotionCovariance::Finite(inv.scaled(sigma2)))
}

/// Plausibility gate on per-frame vehicle dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    /// Minimum speed (m/s); slower frames carry too little Doppler signal.
    pub min_speed: f64,
    /// Maximum absolute yaw rate (rad/s); beyond it the measurement model
    /// degrades (motion within the acquisition interval).
    pub max_yaw_rate: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            min_speed: 1.0,
            max_yaw_rate: 140.0_f64.to_radians(),
        }
    }
}

impl GateConfig {
    pub fn accepts(&self, speed: f64, yaw_rate: f64) -> bool {
        speed >= self.min_speed && yaw_rate.abs() <= self.max_yaw_rate
    }
}

/// Default dynamics gate: rejects frames slower than 1 m/s or turning
/// faster than 140 deg/s.
pub fn gate_frame(speed: f64, yaw_rate: f64) -> bool {
    GateConfig::default().accepts(speed, yaw_rate)
}

/// Runs the full per-frame chain: weighted velocity fit, inlier count,
/// residuals over the inlier mask, and covariance (or sparse sentinel).
pub fn estimate_frame(
    frame: &RadarFrame,
    weights: WeightVector,
    inlier_threshold: f64,
    min_inlier_ratio: f64,
) -> Result<MotionEstimate> {
    let velocity = solve_wlsq_motion(frame, &weights)?;
    let direction = motion_direction(velocity).ok();
    let mask: Vec<bool> = weights.iter().map(|&w| w >= inlier_threshold).collect();
    let inlier_count = mask.iter().filter(|&&m| m).count();
    let covariance = if inlier_count == 0 {
        MotionCovariance::Infinite
    } else {
        let rows: Vec<(f64, f64)> = frame
            .detections
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(d, _)| (d.azimuth.cos(), d.azimuth.sin()))
            .collect();
        let eps = doppler_residuals(frame, velocity, &mask)?;
        motion_covariance(&eps, &rows, frame.detections.len(), min_inlier_ratio)?
    };
    Ok(MotionEstimate {
        t: frame.t,
        velocity,
        direction,
        weights,
        inlier_count,
        covariance,
    })
}
