//! Randomized property checks for the structural invariants each module
//! guarantees: exactness on clean data, invariance under reweighting and
//! offsets, and the degeneracies the solvers must flag instead of absorbing.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

use radcal::geom::{
    motion_direction, normalize_angle, sensor_velocity, Angle, EgoState, MountPose, Vec2,
};
use radcal::imu::{debias, estimate_bias, yaw_rate_at, ImuModel, ImuSample};
use radcal::motion::{
    count_inliers, estimate_frame, predicted_doppler, ransac_weights, solve_wlsq_motion,
    Detection, MotionCovariance, MotionEstimate, RadarFrame, RansacConfig, WeightVector,
};
use radcal::mount::{
    kabsch_pairs, lateral_observation, solve_kabsch_angle, solve_odr_angle,
    solve_weighted_mean_angle, solve_wlsq_angle, LateralObservation,
};
use radcal::traj::{relative_trajectory_error, Pose, Trajectory};
use radcal::Error;

/// A static-world frame: every Doppler reading is exactly consistent with
/// the given sensor velocity, plus an optional per-detection perturbation.
fn frame_for(velocity: Vec2, azimuths: &[f64], perturbation: &[f64]) -> RadarFrame {
    let detections = azimuths
        .iter()
        .enumerate()
        .map(|(i, &az)| {
            let azimuth = Angle::new(az);
            Detection {
                azimuth,
                doppler: predicted_doppler(velocity, azimuth)
                    + perturbation.get(i).copied().unwrap_or(0.0),
                range: 30.0,
                amplitude: 15.0,
            }
        })
        .collect();
    RadarFrame { t: 0.0, detections }
}

/// Keeps azimuths pairwise at least `separation` apart so the fitted system
/// stays well conditioned; the invariants assume distinct bearings, not
/// adversarially collapsed ones.
fn spread_azimuths(mut azimuths: Vec<f64>, separation: f64) -> Vec<f64> {
    azimuths.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut kept: Vec<f64> = Vec::new();
    for az in azimuths {
        if kept.last().is_none_or(|&prev| az - prev >= separation) {
            kept.push(az);
        }
    }
    kept
}

fn observation(t: f64, direction: f64, ratio: f64, weight: f64, speed: f64) -> LateralObservation {
    LateralObservation {
        t,
        direction: Angle::new(direction),
        lateral_ratio: ratio,
        weight,
        speed,
        clamped: false,
    }
}

proptest! {
    #[test]
    fn angle_normalization_is_idempotent_and_lands_in_range(raw in -1e6f64..1e6) {
        let once = normalize_angle(raw).unwrap();
        prop_assert!(once.radians() > -PI && once.radians() <= PI);
        let twice = normalize_angle(once.radians()).unwrap();
        prop_assert_eq!(once.radians().to_bits(), twice.radians().to_bits());
    }

    #[test]
    fn motion_direction_rotates_with_the_velocity(
        vx in -30f64..30.0,
        vy in -30f64..30.0,
        phi in -10f64..10.0,
    ) {
        let v = Vec2::new(vx, vy);
        prop_assume!(v.norm() > 1e-3);
        let base = motion_direction(v).unwrap();
        let turned = motion_direction(v.rotated(Angle::new(phi))).unwrap();
        let expected = Angle::new(base.radians() + phi);
        let gap = Angle::new(turned.radians() - expected.radians()).radians();
        prop_assert!(gap.abs() < 1e-9, "direction moved by {gap:e} instead of the rotation");
    }

    #[test]
    fn sensor_lateral_velocity_is_yaw_rate_times_forward_offset(
        speed in 0f64..40.0,
        yaw_rate in -2f64..2.0,
        x in -5f64..5.0,
        y in -3f64..3.0,
    ) {
        let ego = EgoState {
            t: 0.0,
            speed,
            yaw_rate,
            heading: Angle::new(0.0),
            position: Vec2::new(0.0, 0.0),
        };
        let mount = MountPose { x, y, yaw: Angle::new(0.4) };
        let lateral = sensor_velocity(&ego, &mount).y;
        prop_assert_eq!(lateral.to_bits(), (yaw_rate * x).to_bits());
    }

    #[test]
    fn clean_doppler_data_yields_the_exact_velocity(
        vx in -25f64..25.0,
        vy in -25f64..25.0,
        azimuths in prop::collection::vec(-1.4f64..1.4, 2..25),
    ) {
        let v = Vec2::new(vx, vy);
        prop_assume!(v.norm() > 0.1);
        let azimuths = spread_azimuths(azimuths, 0.05);
        prop_assume!(azimuths.len() >= 2);
        let frame = frame_for(v, &azimuths, &[]);
        let solved = solve_wlsq_motion(&frame, &WeightVector::ones(azimuths.len())).unwrap();
        prop_assert!(
            (solved - v).norm() < 1e-9,
            "recovered {solved:?} for true {v:?}"
        );
    }

    #[test]
    fn velocity_fit_ignores_common_weight_scaling(
        vx in -20f64..20.0,
        vy in -20f64..20.0,
        // Detection weights live in [0, 1]; the scale factor stays small
        // enough to keep the scaled weights inside that domain.
        weights in prop::collection::vec(0.001f64..0.01, 8),
        factor in 0.01f64..100.0,
    ) {
        let v = Vec2::new(vx, vy);
        let azimuths: Vec<f64> = (0..8).map(|i| -1.2 + 0.3 * i as f64).collect();
        // Deterministic residuals make the fit non-trivial without an RNG.
        let perturbation: Vec<f64> = (0..8).map(|i| 0.1 * (3.0 * i as f64).sin()).collect();
        let frame = frame_for(v, &azimuths, &perturbation);
        let base = solve_wlsq_motion(&frame, &WeightVector::new(weights.clone()).unwrap()).unwrap();
        let scaled_weights: Vec<f64> = weights.iter().map(|w| w * factor).collect();
        let scaled = solve_wlsq_motion(&frame, &WeightVector::new(scaled_weights).unwrap()).unwrap();
        prop_assert!(
            (base - scaled).norm() <= 1e-12 * (1.0 + base.norm()),
            "weight scaling moved the fit from {base:?} to {scaled:?}"
        );
    }

    #[test]
    fn finite_motion_covariance_is_positive_semidefinite(
        vx in -20f64..20.0,
        vy in -20f64..20.0,
        noise in prop::collection::vec(-1f64..1.0, 5..40),
    ) {
        let v = Vec2::new(vx, vy);
        let n = noise.len();
        let azimuths: Vec<f64> = (0..n).map(|i| -1.3 + 2.6 * i as f64 / n as f64).collect();
        let frame = frame_for(v, &azimuths, &noise);
        let estimate = estimate_frame(&frame, WeightVector::ones(n), 0.5, 0.3).unwrap();
        if let MotionCovariance::Finite(c) = estimate.covariance {
            prop_assert!(
                c.min_eigenvalue() >= -1e-12 * (1.0 + c.trace()),
                "negative eigenvalue in {c:?}"
            );
        }
    }

    #[test]
    fn inlier_count_never_grows_with_the_threshold(
        weights in prop::collection::vec(0f64..1.0, 1..60),
        a in 0f64..1.0,
        b in 0f64..1.0,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let weights = WeightVector::new(weights).unwrap();
        prop_assert!(count_inliers(&weights, lo) >= count_inliers(&weights, hi));
    }

    #[test]
    fn ransac_is_deterministic_for_a_given_seed(
        vx in -20f64..20.0,
        vy in -20f64..20.0,
        noise in prop::collection::vec(-3f64..3.0, 8..30),
        seed in any::<u64>(),
    ) {
        let v = Vec2::new(vx, vy);
        let n = noise.len();
        let azimuths: Vec<f64> = (0..n).map(|i| -1.3 + 2.6 * i as f64 / n as f64).collect();
        let frame = frame_for(v, &azimuths, &noise);
        let cfg = RansacConfig { seed, ..RansacConfig::default() };
        let first = ransac_weights(&frame, &cfg).unwrap();
        let second = ransac_weights(&frame, &cfg).unwrap();
        prop_assert_eq!(first.as_slice(), second.as_slice());
    }

    #[test]
    fn debias_round_trips_the_measurement_model(
        rate in -2f64..2.0,
        bias in -1f64..1.0,
    ) {
        let model = ImuModel { scale: 1.0, bias, noise_std: 0.0 };
        let measured = model.measure(rate, 0.0);
        prop_assert!((debias(measured, bias) - rate).abs() < 1e-12);
    }

    #[test]
    fn bias_estimate_shifts_with_a_common_offset(
        rates in prop::collection::vec(-1f64..1.0, 2..50),
        offset in -1f64..1.0,
    ) {
        let samples: Vec<ImuSample> = rates
            .iter()
            .enumerate()
            .map(|(i, &yaw_rate)| ImuSample { t: 0.01 * i as f64, yaw_rate })
            .collect();
        let shifted: Vec<ImuSample> = samples
            .iter()
            .map(|s| ImuSample { t: s.t, yaw_rate: s.yaw_rate + offset })
            .collect();
        let window = [(0.0, 0.01 * rates.len() as f64)];
        let base = estimate_bias(&samples, &window).unwrap();
        let moved = estimate_bias(&shifted, &window).unwrap();
        prop_assert!((moved - (base + offset)).abs() < 1e-12);
    }

    #[test]
    fn angle_solvers_ignore_common_weight_scaling(
        seeds in prop::collection::vec((-1.2f64..1.2, -0.8f64..0.8, 0.1f64..10.0), 4..30),
        factor in 0.01f64..100.0,
    ) {
        let observations: Vec<LateralObservation> = seeds
            .iter()
            .enumerate()
            .map(|(i, &(direction, ratio, weight))| {
                observation(i as f64 * 0.1, direction, ratio, weight, 10.0)
            })
            .collect();
        let ratios: Vec<f64> = observations.iter().map(|o| o.lateral_ratio).collect();
        let spread = ratios.iter().cloned().fold(f64::MIN, f64::max)
            - ratios.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 0.3);
        let scaled: Vec<LateralObservation> = observations
            .iter()
            .map(|o| LateralObservation { weight: o.weight * factor, ..*o })
            .collect();

        let base = solve_wlsq_angle(&observations).unwrap();
        let moved = solve_wlsq_angle(&scaled).unwrap();
        prop_assert!((base.yaw.radians() - moved.yaw.radians()).abs() < 1e-12);
        prop_assert!((base.inverse_scale - moved.inverse_scale).abs() < 1e-12);

        let base = solve_weighted_mean_angle(&observations).unwrap();
        let moved = solve_weighted_mean_angle(&scaled).unwrap();
        prop_assert!((base.yaw.radians() - moved.yaw.radians()).abs() < 1e-12);

        let (radar, predicted, weights) = kabsch_pairs(&observations, 1.0);
        let (radar_s, predicted_s, weights_s) = kabsch_pairs(&scaled, 1.0);
        let base = solve_kabsch_angle(&radar, &predicted, &weights).unwrap();
        let moved = solve_kabsch_angle(&radar_s, &predicted_s, &weights_s).unwrap();
        prop_assert!((base.radians() - moved.radians()).abs() < 1e-12);
    }

    #[test]
    fn identical_trajectories_have_zero_segment_error(
        steps in prop::collection::vec((0.1f64..1.0, -5f64..5.0, -5f64..5.0), 4..60),
        segment_length in 1f64..20.0,
    ) {
        let mut t = 0.0;
        let mut position = Vec2::new(0.0, 0.0);
        let mut poses = Vec::with_capacity(steps.len());
        for &(dt, dx, dy) in &steps {
            t += dt;
            position = position + Vec2::new(dx, dy);
            poses.push(Pose {
                t,
                position,
                heading: Angle::new(dy.atan2(dx)),
            });
        }
        let trajectory = Trajectory { poses };
        prop_assume!(trajectory.arc_length() > segment_length);
        let error = relative_trajectory_error(&trajectory, &trajectory, segment_length).unwrap();
        prop_assert!(error.abs() < 1e-12, "self-comparison gave {error:e}");
    }
}

/// A sparse frame (infinite covariance) must enter angle estimation with an
/// exactly zero weight, no matter what its velocity looks like.
#[test]
fn sparse_frames_carry_zero_weight_into_angle_estimation() {
    let estimate = MotionEstimate {
        t: 1.0,
        velocity: Vec2::new(8.0, 1.0),
        direction: Some(Angle::new(0.124)),
        weights: WeightVector::ones(4),
        inlier_count: 2,
        covariance: MotionCovariance::Infinite,
    };
    let obs = lateral_observation(&estimate, 0.2, 3.6).unwrap();
    assert_eq!(obs.weight, 0.0);
}

/// Zero-weight observations are exactly equivalent to deleting them: every
/// solver output, including the frame count, is unchanged.
#[test]
fn zero_weight_observations_match_deletion_exactly() {
    let kept: Vec<LateralObservation> = (0..12)
        .map(|i| {
            let direction = -0.43 + 0.07 * i as f64 + 0.01 * (2.0 * i as f64).sin();
            let ratio = -0.5 + 0.09 * i as f64;
            observation(i as f64 * 0.2, direction, ratio, 1.0 + 0.3 * i as f64, 9.0)
        })
        .collect();
    let mut padded = kept.clone();
    padded.insert(3, observation(0.65, 2.9, 0.77, 0.0, 4.0));
    padded.push(observation(9.9, -3.0, -0.99, 0.0, 0.4));

    let base = solve_wlsq_angle(&kept).unwrap();
    let full = solve_wlsq_angle(&padded).unwrap();
    assert_eq!(base.yaw.radians(), full.yaw.radians());
    assert_eq!(base.inverse_scale, full.inverse_scale);
    assert_eq!(base.frames_used, full.frames_used);

    let base = solve_weighted_mean_angle(&kept).unwrap();
    let full = solve_weighted_mean_angle(&padded).unwrap();
    assert_eq!(base.yaw.radians(), full.yaw.radians());
    assert_eq!(base.frames_used, full.frames_used);

    let (radar, predicted, weights) = kabsch_pairs(&kept, 1.0);
    let (radar_p, predicted_p, weights_p) = kabsch_pairs(&padded, 1.0);
    let base = solve_kabsch_angle(&radar, &predicted, &weights).unwrap();
    let full = solve_kabsch_angle(&radar_p, &predicted_p, &weights_p).unwrap();
    assert_eq!(base.radians(), full.radians());

    let base = solve_odr_angle(&kept, 0.01, 0.001).unwrap();
    let full = solve_odr_angle(&padded, 0.01, 0.001).unwrap();
    assert_eq!(base.yaw.radians(), full.yaw.radians());
    assert_eq!(base.inverse_scale, full.inverse_scale);
    assert_eq!(base.frames_used, full.frames_used);
}

/// Straight-line driving (all lateral ratios zero) makes the gyro scale
/// unobservable; the joint solver must say so, and the fallback must return
/// the literal weighted mean of the per-frame angles.
#[test]
fn straight_driving_degenerates_to_the_weighted_mean() {
    let observations: Vec<LateralObservation> = (0..10)
        .map(|i| observation(i as f64, -0.4 + 0.01 * i as f64, 0.0, 1.0 + i as f64, 12.0))
        .collect();
    match solve_wlsq_angle(&observations) {
        Err(Error::UnobservableScale { .. }) => {}
        other => panic!("expected an unobservable-scale error, got {other:?}"),
    }
    let fallback = solve_weighted_mean_angle(&observations).unwrap();
    let weight_sum: f64 = observations.iter().map(|o| o.weight).sum();
    let expected: f64 = observations
        .iter()
        .map(|o| o.weight * -o.direction.radians())
        .sum::<f64>()
        / weight_sum;
    assert!((fallback.yaw.radians() - expected).abs() < 1e-12);
    assert_eq!(fallback.inverse_scale, 1.0);
}

/// The stationary bias estimate tightens at the 1/sqrt(T) Monte-Carlo rate:
/// 100x more samples shrink its standard error by about 10x.
#[test]
fn bias_estimate_converges_at_root_t_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let bias = 0.013;
    let spread = |samples_per_rep: usize, rng: &mut ChaCha8Rng| -> f64 {
        let reps = 200;
        let errors: Vec<f64> = (0..reps)
            .map(|_| {
                let samples: Vec<ImuSample> = (0..samples_per_rep)
                    .map(|i| ImuSample {
                        t: i as f64 * 0.01,
                        yaw_rate: bias + noise.sample(rng),
                    })
                    .collect();
                let window = [(0.0, samples_per_rep as f64 * 0.01)];
                estimate_bias(&samples, &window).unwrap() - bias
            })
            .collect();
        let mean = errors.iter().sum::<f64>() / reps as f64;
        (errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (reps - 1) as f64).sqrt()
    };
    let short = spread(100, &mut rng);
    let long = spread(10_000, &mut rng);
    let ratio = short / long;
    assert!(
        (6.0..16.0).contains(&ratio),
        "standard error shrank by {ratio:.1}x from T=100 to T=10000; expected about 10x"
    );
}

/// Interpolating the gyro between samples hits the nodes exactly and stays
/// inside the sampled interval's value range.
#[test]
fn gyro_interpolation_is_bounded_by_its_nodes() {
    let samples: Vec<ImuSample> = (0..20)
        .map(|i| ImuSample {
            t: 0.1 * i as f64,
            yaw_rate: (0.7 * i as f64).sin(),
        })
        .collect();
    for pair in samples.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        for k in 0..=10 {
            let t = lo.t + (hi.t - lo.t) * k as f64 / 10.0;
            let value = yaw_rate_at(&samples, t).unwrap();
            let (min, max) = (lo.yaw_rate.min(hi.yaw_rate), lo.yaw_rate.max(hi.yaw_rate));
            assert!(
                (min - 1e-12..=max + 1e-12).contains(&value),
                "interpolated {value} outside [{min}, {max}] at t {t}"
            );
        }
    }
}
