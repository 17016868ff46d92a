//! End-to-end calibration pipeline.
//!
//! Wires the per-frame stages together: detection weighting (RANSAC,
//! caller-supplied, or uniform), velocity estimation, gyro-bias removal
//! from stationary stretches, dynamic gating, lateral-observation
//! extraction, and finally one of the angle estimators. The pipeline keeps
//! per-stage counters so a report can explain how much data survived.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::imu::{debias, estimate_bias, yaw_rate_at, ImuSample};
use crate::io::{Diagnostics, EstimatorResult};
use crate::motion::{
    estimate_frame, ransac_weights, GateConfig, MotionEstimate, RadarFrame, RansacConfig,
    WeightVector,
};
use crate::mount::{
    kabsch_pairs, lateral_observation, solve_kabsch_angle, solve_odr_angle,
    solve_weighted_mean_angle, solve_wlsq_angle, CalibrationSolution, LateralObservation,
};
use serde::{Deserialize, Serialize};

/// Where per-detection weights come from.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSource {
    /// Per-frame RANSAC against the static-world Doppler model (default).
    Ransac,
    /// Caller-supplied weights, one vector per frame.
    External(Vec<WeightVector>),
    /// Every detection weighs 1; for clean data or baselines.
    Unit,
}

/// Angle estimators the pipeline can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Weighted least squares over the linearized angle/scale system.
    Wlsq,
    /// Weighted mean of per-frame angles, inverse scale fixed at 1.
    Mean,
    /// Procrustes rotation between radar and gyro-predicted velocities.
    Kabsch,
    /// Orthogonal-distance refinement honoring noise in both channels.
    Odr,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::Wlsq,
        Estimator::Mean,
        Estimator::Kabsch,
        Estimator::Odr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Wlsq => "wlsq",
            Estimator::Mean => "mean",
            Estimator::Kabsch => "kabsch",
            Estimator::Odr => "odr",
        }
    }
}

/// Tunables for the full pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub ransac: RansacConfig,
    /// Detection weights at or above this value count as inliers.
    pub inlier_threshold: f64,
    /// Minimum inlier fraction for a frame to get a finite covariance.
    pub inlier_ratio_threshold: f64,
    pub gate: GateConfig,
    /// Radar speed below which the vehicle counts as stationary (m/s).
    /// Sized for the noise of radar-estimated speed at standstill, which
    /// is what the pipeline thresholds — no odometry is involved.
    pub stationary_speed: f64,
    /// Minimum stationary stretch usable for gyro-bias estimation (s).
    pub stationary_min_duration: f64,
    /// Direction noise for the orthogonal-distance solver (rad); derived
    /// from the data when absent.
    pub odr_sigma_direction: Option<f64>,
    /// Lateral-ratio noise for the orthogonal-distance solver; derived
    /// from the data when absent.
    pub odr_sigma_ratio: Option<f64>,
    /// Feed the least-squares inverse scale into the Procrustes solver
    /// instead of assuming unit scale.
    pub kabsch_two_pass: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            ransac: RansacConfig::default(),
            inlier_threshold: 0.5,
            inlier_ratio_threshold: 0.3,
            gate: GateConfig::default(),
            stationary_speed: 0.15,
            stationary_min_duration: 1.0,
            odr_sigma_direction: None,
            odr_sigma_ratio: None,
            kabsch_two_pass: false,
        }
    }
}

/// Everything the per-frame stages produce.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Motion estimates for every frame that yielded one.
    pub motions: Vec<MotionEstimate>,
    /// Debiased gyro rates aligned with `motions` (rad/s).
    pub yaw_rates: Vec<f64>,
    /// Gated calibration observations (sparse frames keep zero weight).
    pub observations: Vec<LateralObservation>,
    /// Estimated gyro bias (rad/s); 0 when no stationary stretch exists.
    pub bias: f64,
    /// Total stationary time the bias was averaged over (s).
    pub bias_window_s: f64,
    pub diagnostics: Diagnostics,
}

/// Contiguous stretches of `motions` whose radar speed stays below
/// `max_speed` for at least `min_duration` seconds, as inclusive time
/// windows.
pub fn stationary_windows(
    motions: &[MotionEstimate],
    max_speed: f64,
    min_duration: f64,
) -> Vec<(f64, f64)> {
    let mut windows = Vec::new();
    let mut run: Option<(f64, f64)> = None;
    for m in motions {
        if m.velocity.norm() < max_speed {
            run = Some(match run {
                Some((start, _)) => (start, m.t),
                None => (m.t, m.t),
            });
        } else if let Some((start, end)) = run.take() {
            if end - start >= min_duration {
                windows.push((start, end));
            }
        }
    }
    if let Some((start, end)) = run {
        if end - start >= min_duration {
            windows.push((start, end));
        }
    }
    windows
}

/// Runs every per-frame stage: weighting, velocity estimation, bias
/// removal, gating, and lateral-observation extraction.
///
/// The vehicle's speed is taken from the radar estimate itself, so no
/// odometry input is needed; `forward_offset` is the sensor's known
/// x-position on the vehicle (m). Frames that fail any stage are counted
/// in the diagnostics rather than aborting the run.
pub fn run_pipeline(
    frames: &[RadarFrame],
    imu: &[ImuSample],
    forward_offset: f64,
    weights: &WeightSource,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    if let WeightSource::External(w) = weights {
        if w.len() != frames.len() {
            return Err(Error::domain(
                "pipeline weights",
                format!("{} weight vectors for {} frames", w.len(), frames.len()),
            ));
        }
    }
    let mut diagnostics = Diagnostics {
        frames_total: frames.len(),
        ..Diagnostics::default()
    };

    let mut motions = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let picked = match weights {
            WeightSource::Ransac => ransac_weights(frame, &cfg.ransac),
            WeightSource::External(w) => Ok(w[i].clone()),
            WeightSource::Unit => Ok(WeightVector::ones(frame.detections.len())),
        };
        match picked.and_then(|w| {
            estimate_frame(frame, w, cfg.inlier_threshold, cfg.inlier_ratio_threshold)
        }) {
            Ok(est) => motions.push(est),
            Err(_) => diagnostics.frames_failed += 1,
        }
    }
    if motions.is_empty() {
        return Err(Error::InsufficientData {
            context: "pipeline motion estimates",
            needed: 1,
            got: 0,
        });
    }

    let windows = stationary_windows(&motions, cfg.stationary_speed, cfg.stationary_min_duration);
    let (bias, bias_window_s) = if windows.is_empty() {
        (0.0, 0.0)
    } else {
        (
            estimate_bias(imu, &windows)?,
            windows.iter().map(|(a, b)| b - a).sum(),
        )
    };
    diagnostics.bias_estimate_radps = bias;
    diagnostics.bias_window_s = bias_window_s;

    let mut yaw_rates = Vec::with_capacity(motions.len());
    for m in &motions {
        let rate = yaw_rate_at(imu, m.t).ok_or(Error::InsufficientData {
            context: "gyro samples",
            needed: 1,
            got: 0,
        })?;
        yaw_rates.push(debias(rate, bias));
    }

    let mut observations = Vec::new();
    for (m, &rate) in motions.iter().zip(&yaw_rates) {
        if m.is_sparse() {
            diagnostics.frames_sparse += 1;
        }
        if !cfg.gate.accepts(m.velocity.norm(), rate) {
            diagnostics.frames_gated += 1;
            continue;
        }
        match lateral_observation(m, rate, forward_offset) {
            Ok(obs) => {
                if obs.clamped {
                    diagnostics.chi_clamped += 1;
                }
                observations.push(obs);
            }
            Err(_) => diagnostics.frames_failed += 1,
        }
    }

    Ok(PipelineOutput {
        motions,
        yaw_rates,
        observations,
        bias,
        bias_window_s,
        diagnostics,
    })
}

/// Median of a small value set; the fallback is returned when empty.
fn median_or(mut values: Vec<f64>, fallback: f64) -> f64 {
    if values.is_empty() {
        return fallback;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    values[values.len() / 2]
}

/// Noise levels for the orthogonal-distance solver, either configured or
/// derived from the observation weights: the direction noise follows from
/// each frame's velocity covariance, the ratio noise from scaling it by the
/// lateral ratio.
pub fn odr_sigmas(observations: &[LateralObservation], cfg: &PipelineConfig) -> (f64, f64) {
    const FLOOR: f64 = 1e-6;
    let per_obs: Vec<(f64, f64)> = observations
        .iter()
        .filter(|o| o.weight > 0.0 && o.speed > 0.0)
        .map(|o| {
            let sigma_dir = (0.5 / o.weight).sqrt() / o.speed;
            (sigma_dir, o.lateral_ratio.abs() * sigma_dir)
        })
        .collect();
    let sigma_direction = cfg.odr_sigma_direction.unwrap_or_else(|| {
        median_or(per_obs.iter().map(|p| p.0).collect(), FLOOR).max(FLOOR)
    });
    let sigma_ratio = cfg.odr_sigma_ratio.unwrap_or_else(|| {
        median_or(per_obs.iter().map(|p| p.1).collect(), FLOOR).max(FLOOR)
    });
    (sigma_direction, sigma_ratio)
}

/// Runs one estimator over the gated observations. Returns the solution
/// and whether the weighted-mean fallback was taken (least squares only;
/// it falls back when the yaw-rate scale is unobservable, e.g. after
/// straight-line-only driving).
pub fn solve_calibration(
    observations: &[LateralObservation],
    estimator: Estimator,
    cfg: &PipelineConfig,
) -> Result<(CalibrationSolution, bool)> {
    match estimator {
        Estimator::Wlsq => match solve_wlsq_angle(observations) {
            Ok(solution) => Ok((solution, false)),
            Err(Error::UnobservableScale { .. }) => {
                Ok((solve_weighted_mean_angle(observations)?, true))
            }
            Err(e) => Err(e),
        },
        Estimator::Mean => Ok((solve_weighted_mean_angle(observations)?, false)),
        Estimator::Kabsch => {
            let (inverse_scale, fallback) = if cfg.kabsch_two_pass {
                match solve_wlsq_angle(observations) {
                    Ok(solution) => (solution.inverse_scale, false),
                    Err(Error::UnobservableScale { .. }) => (1.0, true),
                    Err(e) => return Err(e),
                }
            } else {
                (1.0, false)
            };
            let (radar, predicted, weights) = kabsch_pairs(observations, inverse_scale);
            let yaw = solve_kabsch_angle(&radar, &predicted, &weights)?;
            let mut sum = 0.0;
            let mut total = 0.0;
            let mut used = 0;
            for ((r, p), &w) in radar.iter().zip(&predicted).zip(&weights) {
                if w <= 0.0 {
                    continue;
                }
                used += 1;
                let mismatch =
                    crate::geom::Angle::new(p.y.atan2(p.x) - r.y.atan2(r.x) - yaw.radians());
                sum += w * mismatch.radians() * mismatch.radians();
                total += w;
            }
            Ok((
                CalibrationSolution {
                    yaw,
                    inverse_scale,
                    frames_used: used,
                    residual_rms: if total > 0.0 { (sum / total).sqrt() } else { 0.0 },
                    converged: true,
                },
                fallback,
            ))
        }
        Estimator::Odr => {
            let (sigma_direction, sigma_ratio) = odr_sigmas(observations, cfg);
            Ok((
                solve_odr_angle(observations, sigma_direction, sigma_ratio)?,
                false,
            ))
        }
    }
}

/// Converts a solver result into its report form.
pub fn to_estimator_result(solution: &CalibrationSolution, fallback: bool) -> EstimatorResult {
    EstimatorResult {
        theta_rad: solution.yaw.radians(),
        theta_deg: solution.yaw.degrees(),
        s_prime: solution.inverse_scale,
        frames_used: solution.frames_used,
        residual_rms_rad: solution.residual_rms,
        converged: solution.converged,
        fallback,
    }
}

/// One-call entry point: runs the pipeline and the requested estimators,
/// returning report-ready results keyed by estimator name.
pub fn calibrate(
    frames: &[RadarFrame],
    imu: &[ImuSample],
    forward_offset: f64,
    weights: &WeightSource,
    estimators: &[Estimator],
    cfg: &PipelineConfig,
) -> Result<(BTreeMap<String, EstimatorResult>, PipelineOutput)> {
    let output = run_pipeline(frames, imu, forward_offset, weights, cfg)?;
    let mut estimates = BTreeMap::new();
    for &estimator in estimators {
        let (solution, fallback) = solve_calibration(&output.observations, estimator, cfg)?;
        estimates.insert(
            estimator.name().to_string(),
            to_estimator_result(&solution, fallback),
        );
    }
    Ok((estimates, output))
}
