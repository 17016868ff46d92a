//! Automotive radar mounting-angle calibration.
//!
//! The toolkit estimates the yaw angle of a Doppler radar on a vehicle —
//! and, jointly, the scale factor of the gyro yaw-rate channel — from
//! ordinary driving data. It covers the full chain:
//!
//! * per-frame sensor-velocity estimation from Doppler returns with RANSAC
//!   outlier rejection ([`motion`]),
//! * gyro bias estimation from stationary windows ([`imu`]),
//! * four angle solvers over the lateral-velocity equality ([`mount`]),
//! * a deterministic scenario simulator for validation ([`sim`]),
//! * dead-reckoned trajectory reconstruction and segment-wise trajectory
//!   error for end-to-end evaluation ([`traj`]),
//! * CSV/JSON input and output ([`io`]) and the orchestrated estimation
//!   [`pipeline`].

pub mod error;
pub mod geom;
pub mod imu;
pub mod io;
pub mod motion;
pub mod mount;
pub mod pipeline;
pub mod sim;
pub mod traj;

pub use error::{Error, Result};
