//! Planar geometry and vehicle kinematics primitives.
//!
//! Conventions used throughout the toolkit: the vehicle frame has x forward,
//! y to the left, origin at the rear-axle center; angles are
//! counter-clockwise positive and always normalized to (-pi, pi]. The radar
//! frame is the vehicle frame rotated by the mounting yaw angle.

use crate::error::{Error, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A plane angle in radians, kept normalized to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Wraps `radians` into (-pi, pi]. Panics on non-finite input; use
    /// [`normalize_angle`] at trust boundaries.
    pub fn new(radians: f64) -> Angle {
        assert!(radians.is_finite(), "angle must be finite, got {radians}");
        // Already-normalized values pass through bit for bit, which keeps
        // normalization idempotent and serialization round trips exact.
        if radians > -std::f64::consts::PI && radians <= std::f64::consts::PI {
            return Angle(radians);
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        let r = radians.rem_euclid(two_pi);
        // rem_euclid lands in [0, 2*pi]; fold the upper half down so that
        // pi maps to pi and 2*pi maps to 0.
        Angle(if r > std::f64::consts::PI { r - two_pi } else { r })
    }

    pub fn from_degrees(degrees: f64) -> Angle {
        Angle::new(degrees.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    pub fn sin(self) -> f64 {
        self.0.sin()
    }

    pub fn cos(self) -> f64 {
        self.0.cos()
    }
}

impl std::ops::Add for Angle {
    type Output = Angle;
    fn add(self, rhs: Angle) -> Angle {
        Angle::new(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Angle {
    type Output = Angle;
    fn sub(self, rhs: Angle) -> Angle {
        Angle::new(self.0 - rhs.0)
    }
}

impl std::ops::Neg for Angle {
    type Output = Angle;
    fn neg(self) -> Angle {
        Angle::new(-self.0)
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Angle, D::Error> {
        let raw = f64::deserialize(deserializer)?;
        normalize_angle(raw).map_err(serde::de::Error::custom)
    }
}

/// Wraps a raw radian value into (-pi, pi].
///
/// This is idempotent: normalizing an already-normalized angle returns the
/// same value.
pub fn normalize_angle(raw: f64) -> Result<Angle> {
    if !raw.is_finite() {
        return Err(Error::domain(
            "normalize_angle",
            format!("non-finite angle {raw}"),
        ));
    }
    Ok(Angle::new(raw))
}

/// A 2-D vector; in vehicle-frame use x is forward and y is left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Vec2 {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, rhs: Vec2) -> f64 {
        self.x * rhs.x + self.y * rhs.y
    }

    /// z-component of the 3-D cross product `self x rhs`.
    pub fn cross(self, rhs: Vec2) -> f64 {
        self.x * rhs.y - self.y * rhs.x
    }

    /// Rotates the vector counter-clockwise by `angle`.
    pub fn rotated(self, angle: Angle) -> Vec2 {
        let (s, c) = (angle.sin(), angle.cos());
        Vec2 {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A symmetric 2x2 matrix, used for normal equations and covariances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };

    pub fn trace(self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Smaller eigenvalue; non-negative (up to rounding) for a PSD matrix.
    pub fn min_eigenvalue(self) -> f64 {
        let gap = ((self.xx - self.yy).powi(2) + 4.0 * self.xy * self.xy).sqrt();
        0.5 * (self.trace() - gap)
    }

    /// Solves `self * x = b`, or `None` when the matrix is singular
    /// relative to its own scale (intended for PSD normal matrices).
    pub fn solve(self, b: (f64, f64)) -> Option<(f64, f64)> {
        let det = self.det();
        let scale = self.trace().abs().max(f64::MIN_POSITIVE);
        if det.abs() <= 1e-12 * scale * scale {
            return None;
        }
        Some((
            (self.yy * b.0 - self.xy * b.1) / det,
            (self.xx * b.1 - self.xy * b.0) / det,
        ))
    }

    pub fn inverse(self) -> Option<Sym2> {
        let det = self.det();
        let scale = self.trace().abs().max(f64::MIN_POSITIVE);
        if det.abs() <= 1e-12 * scale * scale {
            return None;
        }
        Some(Sym2 {
            xx: self.yy / det,
            xy: -self.xy / det,
            yy: self.xx / det,
        })
    }

    pub fn scaled(self, k: f64) -> Sym2 {
        Sym2 {
            xx: k * self.xx,
            xy: k * self.xy,
            yy: k * self.yy,
        }
    }
}

/// Where a radar sits on the vehicle: position in the vehicle frame (m)
/// plus the mounting yaw angle between the vehicle and radar x-axes.
///
/// The yaw angle is what calibration estimates; the position is assumed
/// known from the vehicle blueprint. Lateral-velocity based estimation
/// needs `x != 0`; with the sensor on the rear axle the yaw rate induces
/// no lateral velocity at the sensor and the scale becomes unobservable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MountPose {
    /// Forward offset from the rear-axle center (m).
    pub x: f64,
    /// Left offset from the rear-axle center (m).
    pub y: f64,
    /// Mounting yaw angle of the radar relative to the vehicle x-axis.
    pub yaw: Angle,
}

/// Ego-vehicle state at one time instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    /// Timestamp (s).
    pub t: f64,
    /// Forward speed of the rear-axle center (m/s).
    pub speed: f64,
    /// Yaw rate (rad/s), counter-clockwise positive.
    pub yaw_rate: f64,
    /// Heading in the world frame.
    pub heading: Angle,
    /// Rear-axle position in the world frame (m).
    pub position: Vec2,
}

/// Direction of travel implied by a velocity vector, i.e. `atan2(y, x)`.
pub fn motion_direction(v: Vec2) -> Result<Angle> {
    if !v.is_finite() {
        return Err(Error::domain(
            "motion_direction",
            format!("non-finite velocity ({}, {})", v.x, v.y),
        ));
    }
    if v.x == 0.0 && v.y == 0.0 {
        return Err(Error::domain(
            "motion_direction",
            "zero velocity has no direction",
        ));
    }
    Ok(Angle::new(v.y.atan2(v.x)))
}

/// Velocity of a sensor rigidly attached to the vehicle, expressed in the
/// vehicle frame.
///
/// The rear-axle center moves at `(speed, 0)`; the yaw rate adds the
/// rigid-body term `omega x r = (-yaw_rate * y, yaw_rate * x)`.
pub fn sensor_velocity(ego: &EgoState, mount: &MountPose) -> Vec2 {
    Vec2::new(
        ego.speed - ego.yaw_rate * mount.y,
        ego.yaw_rate * mount.x,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn normalize_wraps_multiples_of_pi() {
        assert_relative_eq!(normalize_angle(3.0 * PI).unwrap().radians(), PI);
        assert_relative_eq!(normalize_angle(-PI).unwrap().radians(), PI);
        assert_relative_eq!(normalize_angle(-1.5 * PI).unwrap().radians(), FRAC_PI_2);
        assert_eq!(normalize_angle(0.0).unwrap().radians(), 0.0);
    }

    #[test]
    fn normalize_rejects_non_finite() {
        assert!(normalize_angle(f64::NAN).is_err());
        assert!(normalize_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn normalize_is_idempotent_on_a_sweep() {
        for i in -1000..=1000 {
            let raw = i as f64 * 0.037;
            let once = normalize_angle(raw).unwrap().radians();
            let twice = normalize_angle(once).unwrap().radians();
            assert_eq!(once, twice, "raw={raw}");
            assert!(once > -PI && once <= PI, "raw={raw} gave {once}");
        }
    }

    #[test]
    fn motion_direction_basic_quadrants() {
        assert_relative_eq!(
            motion_direction(Vec2::new(1.0, 1.0)).unwrap().radians(),
            FRAC_PI_4
        );
        assert_relative_eq!(
            motion_direction(Vec2::new(-1.0, 0.0)).unwrap().radians(),
            PI
        );
    }

    #[test]
    fn motion_direction_rejects_zero_vector() {
        assert!(motion_direction(Vec2::ZERO).is_err());
    }

    #[test]
    fn motion_direction_is_rotation_equivariant() {
        let v = Vec2::new(3.0, -2.0);
        for i in 0..48 {
            let phi = Angle::new(i as f64 * 0.26 - 6.0);
            let rotated = motion_direction(v.rotated(phi)).unwrap();
            let expected = motion_direction(v).unwrap() + phi;
            assert_relative_eq!(rotated.radians(), expected.radians(), epsilon = 1e-12);
        }
    }

    #[test]
    fn sensor_velocity_matches_rigid_body_kinematics() {
        let ego = EgoState {
            t: 0.0,
            speed: 10.0,
            yaw_rate: 0.5,
            heading: Angle::ZERO,
            position: Vec2::ZERO,
        };
        let mount = MountPose {
            x: 3.6,
            y: -0.6,
            yaw: Angle::from_degrees(25.0),
        };
        let v = sensor_velocity(&ego, &mount);
        assert_relative_eq!(v.x, 10.3, epsilon = 1e-12);
        assert_relative_eq!(v.y, 1.8, epsilon = 1e-12);
    }

    #[test]
    fn sensor_velocity_without_yaw_is_pure_forward() {
        let ego = EgoState {
            t: 0.0,
            speed: 7.25,
            yaw_rate: 0.0,
            heading: Angle::ZERO,
            position: Vec2::ZERO,
        };
        let mount = MountPose {
            x: 1.2,
            y: 0.8,
            yaw: Angle::ZERO,
        };
        assert_eq!(sensor_velocity(&ego, &mount), Vec2::new(7.25, 0.0));
    }

    #[test]
    fn rotation_preserves_norm_and_composes() {
        let v = Vec2::new(2.0, -5.0);
        let a = Angle::from_degrees(37.0);
        let b = Angle::from_degrees(-112.0);
        assert_relative_eq!(v.rotated(a).norm(), v.norm(), epsilon = 1e-12);
        let composed = v.rotated(a).rotated(b);
        let direct = v.rotated(a + b);
        assert_relative_eq!(composed.x, direct.x, epsilon = 1e-12);
        assert_relative_eq!(composed.y, direct.y, epsilon = 1e-12);
    }

    #[test]
    fn angle_serde_round_trips_and_normalizes() {
        let a: Angle = serde_json::from_str("4.0").unwrap();
        assert_relative_eq!(a.radians(), 4.0 - 2.0 * PI);
        let s = serde_json::to_string(&Angle::from_degrees(25.0)).unwrap();
        let back: Angle = serde_json::from_str(&s).unwrap();
        assert_relative_eq!(back.degrees(), 25.0, epsilon = 1e-12);
        assert!(serde_json::from_str::<Angle>("1e999").is_err());
    }
}
