//! Trajectory reconstruction and comparison.
//!
//! The calibration quality ultimately shows up in odometry: radar-estimated
//! sensor velocities, mapped through the mount pose to the vehicle frame and
//! dead-reckoned with the gyro heading, should reproduce the driven path. A
//! mount-angle error rotates every velocity increment while the gyro heading
//! stays true, so the reconstructed path shears away from the reference.
//! [`relative_trajectory_error`] quantifies that: it splits the reference
//! into fixed-arc-length segments, aligns the reconstruction to the
//! reference pose at each segment start, and averages the endpoint errors,
//! which makes the metric independent of where the drive started and of any
//! global heading offset.

use crate::error::{Error, Result};
use crate::geom::{Angle, EgoState, MountPose, Vec2};
use crate::motion::MotionEstimate;
use serde::{Deserialize, Serialize};

/// Planar pose at a point in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Timestamp (s).
    pub t: f64,
    /// Position in the world frame (m).
    pub position: Vec2,
    /// Heading in the world frame.
    pub heading: Angle,
}

/// A time-ordered sequence of poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn from_ego(states: &[EgoState]) -> Trajectory {
        Trajectory {
            poses: states
                .iter()
                .map(|s| Pose {
                    t: s.t,
                    position: s.position,
                    heading: s.heading,
                })
                .collect(),
        }
    }

    pub fn start_time(&self) -> Option<f64> {
        self.poses.first().map(|p| p.t)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.poses.last().map(|p| p.t)
    }

    /// Total polyline length (m).
    pub fn arc_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }

    /// Pose linearly interpolated at time `t`; `None` outside the span.
    /// Headings interpolate along the shorter arc.
    pub fn pose_at(&self, t: f64) -> Option<Pose> {
        let first = self.poses.first()?;
        let last = self.poses.last()?;
        if t < first.t || t > last.t {
            return None;
        }
        let i = self.poses.partition_point(|p| p.t < t);
        if i == 0 {
            return Some(*first);
        }
        let a = self.poses[i - 1];
        let b = self.poses[i];
        let f = (t - a.t) / (b.t - a.t);
        Some(Pose {
            t,
            position: a.position + (b.position - a.position) * f,
            heading: Angle::new(a.heading.radians() + (b.heading - a.heading).radians() * f),
        })
    }
}

/// Dead-reckons a vehicle trajectory from per-frame radar velocity
/// estimates, the sensor's mount pose, and debiased gyro readings aligned
/// with the frames.
///
/// Each radar velocity is rotated into the vehicle frame, the lever-arm
/// share of the turn rate is removed to get the rear-axle velocity, and the
/// pose is integrated forward-Euler from the origin with zero initial
/// heading. Sparse frames (no usable covariance) are bridged by holding the
/// previous rear-axle velocity; leading sparse frames are skipped.
pub fn reconstruct_trajectory(
    motions: &[MotionEstimate],
    mount: &MountPose,
    yaw_rates: &[f64],
) -> Result<Trajectory> {
    if motions.len() != yaw_rates.len() {
        return Err(Error::domain(
            "trajectory reconstruction",
            format!(
                "{} motion estimates but {} yaw-rate samples",
                motions.len(),
                yaw_rates.len()
            ),
        ));
    }
    let start = motions.iter().position(|m| !m.is_sparse()).unwrap_or(motions.len());
    let usable = motions.len() - start;
    if usable < 2 {
        return Err(Error::InsufficientData {
            context: "trajectory reconstruction",
            needed: 2,
            got: usable,
        });
    }

    let rear_velocity = |m: &MotionEstimate, yaw_rate: f64| -> Vec2 {
        let v_vehicle = m.velocity.rotated(mount.yaw);
        v_vehicle - Vec2::new(-yaw_rate * mount.y, yaw_rate * mount.x)
    };

    let mut poses = Vec::with_capacity(usable);
    poses.push(Pose {
        t: motions[start].t,
        position: Vec2::ZERO,
        heading: Angle::ZERO,
    });
    let mut v_rear = rear_velocity(&motions[start], yaw_rates[start]);
    let mut prev_t = motions[start].t;
    let mut prev_rate = yaw_rates[start];
    for (k, m) in motions.iter().enumerate().skip(start + 1) {
        let dt = m.t - prev_t;
        if dt <= 0.0 {
            return Err(Error::Alignment {
                frame: k,
                message: format!("timestamp {} does not increase past {}", m.t, prev_t),
            });
        }
        let last = *poses.last().unwrap();
        let heading = Angle::new(last.heading.radians() + prev_rate * dt);
        let position = last.position + v_rear.rotated(last.heading) * dt;
        poses.push(Pose {
            t: m.t,
            position,
            heading,
        });
        if !m.is_sparse() {
            v_rear = rear_velocity(m, yaw_rates[k]);
        }
        prev_t = m.t;
        prev_rate = yaw_rates[k];
    }
    Ok(Trajectory { poses })
}

/// Endpoint errors of fixed-arc-length reference segments after aligning
/// the estimated trajectory to the reference pose at each segment start.
///
/// The reference is split every `segment_length` metres of its own arc
/// length (the trailing partial segment is dropped). Segment boundaries are
/// interpolated in time on both trajectories, so the two need not share
/// timestamps. Errors are in metres.
pub fn segment_errors(
    estimated: &Trajectory,
    reference: &Trajectory,
    segment_length: f64,
) -> Result<Vec<f64>> {
    if !(segment_length.is_finite() && segment_length > 0.0) {
        return Err(Error::domain(
            "trajectory comparison",
            format!("segment length {segment_length} must be positive"),
        ));
    }
    for traj in [estimated, reference] {
        if traj.poses.len() < 2 {
            return Err(Error::InsufficientData {
                context: "trajectory comparison",
                needed: 2,
                got: traj.poses.len(),
            });
        }
    }
    let t0 = estimated.start_time().unwrap().max(reference.start_time().unwrap());
    let t1 = estimated.end_time().unwrap().min(reference.end_time().unwrap());
    if t1 <= t0 {
        return Err(Error::domain(
            "trajectory comparison",
            "trajectories do not overlap in time".to_string(),
        ));
    }

    // Reference polyline restricted to the common time span, with
    // interpolated end poses, and its cumulative arc length.
    let mut pts = vec![reference.pose_at(t0).unwrap()];
    pts.extend(
        reference
            .poses
            .iter()
            .filter(|p| p.t > t0 && p.t < t1)
            .copied(),
    );
    pts.push(reference.pose_at(t1).unwrap());
    let mut arc = Vec::with_capacity(pts.len());
    arc.push(0.0);
    for w in pts.windows(2) {
        arc.push(arc.last().unwrap() + (w[1].position - w[0].position).norm());
    }
    let total = *arc.last().unwrap();
    let segments = (total / segment_length).floor() as usize;
    if segments == 0 {
        return Err(Error::InsufficientData {
            context: "trajectory comparison segments",
            needed: 1,
            got: 0,
        });
    }

    // Boundary times where the reference arc length crosses k * L.
    let mut boundaries = Vec::with_capacity(segments + 1);
    boundaries.push(t0);
    for k in 1..=segments {
        let target = k as f64 * segment_length;
        let i = arc.partition_point(|&s| s < target).clamp(1, arc.len() - 1);
        let ds = arc[i] - arc[i - 1];
        let f = if ds > 0.0 {
            ((target - arc[i - 1]) / ds).clamp(0.0, 1.0)
        } else {
            1.0
        };
        boundaries.push(pts[i - 1].t + f * (pts[i].t - pts[i - 1].t));
    }

    let mut errors = Vec::with_capacity(segments);
    for w in boundaries.windows(2) {
        let ref_start = reference.pose_at(w[0]).unwrap();
        let ref_end = reference.pose_at(w[1]).unwrap();
        let est_start = estimated.pose_at(w[0]).unwrap();
        let est_end = estimated.pose_at(w[1]).unwrap();
        let spin = ref_start.heading - est_start.heading;
        let aligned_end = (est_end.position - est_start.position).rotated(spin) + ref_start.position;
        errors.push((aligned_end - ref_end.position).norm());
    }
    Ok(errors)
}

/// Mean of [`segment_errors`] (m).
pub fn relative_trajectory_error(
    estimated: &Trajectory,
    reference: &Trajectory,
    segment_length: f64,
) -> Result<f64> {
    let errors = segment_errors(estimated, reference, segment_length)?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}
