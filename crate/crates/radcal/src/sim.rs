//! Deterministic driving-scenario simulator.
//!
//! Produces matched radar frames, gyro samples, and ground-truth ego states
//! for a configured trajectory: a stationary warm-up (for bias estimation)
//! followed by a piecewise speed/yaw-rate profile that cycles until the
//! configured driving duration is filled. Targets are regenerated every
//! frame — static scatterers, independently moving targets, and uniform
//! clutter — so no persistent map is needed.

use crate::error::{Error, Result};
use crate::geom::{Angle, EgoState, MountPose, Vec2};
use crate::imu::{ImuModel, ImuSample};
use crate::motion::{predicted_doppler, Detection, RadarFrame};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// One leg of the driving profile; speed and yaw rate ramp linearly from
/// their start to their end values over the leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    /// Leg duration (s).
    pub duration_s: f64,
    /// Speed at the start of the leg (m/s).
    pub speed_start_mps: f64,
    /// Speed at the end of the leg (m/s).
    pub speed_end_mps: f64,
    /// Yaw rate at the start of the leg (rad/s).
    pub yaw_rate_start_radps: f64,
    /// Yaw rate at the end of the leg (rad/s).
    pub yaw_rate_end_radps: f64,
}

impl SegmentSpec {
    pub fn constant(duration_s: f64, speed: f64, yaw_rate: f64) -> SegmentSpec {
        SegmentSpec {
            duration_s,
            speed_start_mps: speed,
            speed_end_mps: speed,
            yaw_rate_start_radps: yaw_rate,
            yaw_rate_end_radps: yaw_rate,
        }
    }
}

/// Target mix rendered into each frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePopulation {
    /// Static scatterers per frame.
    pub static_count: usize,
    /// Independently moving targets per frame.
    pub mover_count: usize,
    /// Mover ground-speed range (m/s); headings are uniform.
    pub mover_speed_min_mps: f64,
    pub mover_speed_max_mps: f64,
    /// Fraction of the final frame that is uniform clutter, in [0, 1).
    pub clutter_ratio: f64,
}

impl FramePopulation {
    /// Clutter count that makes clutter the configured fraction of the
    /// whole frame.
    pub fn clutter_count(&self) -> usize {
        let real = (self.static_count + self.mover_count) as f64;
        (self.clutter_ratio / (1.0 - self.clutter_ratio) * real).round() as usize
    }
}

/// Measurement-noise model for rendered detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Bearing noise (rad, one sigma).
    pub sigma_azimuth_rad: f64,
    /// Doppler noise (m/s, one sigma).
    pub sigma_doppler_mps: f64,
    /// Extra Doppler spread per unit of longitudinal acceleration (s):
    /// models the smearing that speed changes within the acquisition
    /// interval cause. Zero disables the effect.
    pub accel_doppler_coeff_s: f64,
}

/// Sensor geometry and clutter envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    /// Half opening angle of the field of view (rad).
    pub fov_half_angle_rad: f64,
    /// Range interval targets are drawn from (m).
    pub range_min_m: f64,
    pub range_max_m: f64,
    /// Clutter Doppler values are uniform in +/- this bound (m/s).
    pub clutter_doppler_max_mps: f64,
}

/// Full scenario description; serializable as the simulator's config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Driving time after the stationary warm-up (s). The segment pattern
    /// cycles until this much driving is generated.
    pub duration_s: f64,
    /// Radar frame rate (Hz).
    pub frame_rate_hz: f64,
    /// Gyro sample rate (Hz); must be at least the frame rate.
    pub imu_rate_hz: f64,
    /// Stationary warm-up before driving starts (s).
    pub stationary_duration_s: f64,
    pub mount: MountPose,
    pub imu_model: ImuModel,
    pub segments: Vec<SegmentSpec>,
    pub population: FramePopulation,
    pub noise: NoiseSpec,
    pub sensor: SensorSpec,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            duration_s: 25.0,
            frame_rate_hz: 17.0,
            imu_rate_hz: 100.0,
            stationary_duration_s: 2.0,
            mount: MountPose {
                x: 3.6,
                y: -0.6,
                yaw: Angle::from_degrees(25.0),
            },
            imu_model: ImuModel::default(),
            segments: mixed_turn_pattern(),
            population: FramePopulation {
                static_count: 42,
                mover_count: 8,
                mover_speed_min_mps: 3.0,
                mover_speed_max_mps: 15.0,
                clutter_ratio: 0.1,
            },
            noise: NoiseSpec {
                sigma_azimuth_rad: 0.3_f64.to_radians(),
                sigma_doppler_mps: 0.1,
                accel_doppler_coeff_s: 0.05,
            },
            sensor: SensorSpec {
                fov_half_angle_rad: 60.0_f64.to_radians(),
                range_min_m: 5.0,
                range_max_m: 100.0,
                clutter_doppler_max_mps: 30.0,
            },
            seed: 0,
        }
    }
}

/// Default driving pattern: accelerate, sweep the yaw rate through both
/// turn directions, and vary speed so the lateral ratio shows spread.
pub fn mixed_turn_pattern() -> Vec<SegmentSpec> {
    vec![
        SegmentSpec {
            duration_s: 3.0,
            speed_start_mps: 0.0,
            speed_end_mps: 8.0,
            yaw_rate_start_radps: 0.0,
            yaw_rate_end_radps: 0.0,
        },
        SegmentSpec {
            duration_s: 3.0,
            speed_start_mps: 8.0,
            speed_end_mps: 8.0,
            yaw_rate_start_radps: 0.0,
            yaw_rate_end_radps: 0.35,
        },
        SegmentSpec {
            duration_s: 3.0,
            speed_start_mps: 8.0,
            speed_end_mps: 10.0,
            yaw_rate_start_radps: 0.35,
            yaw_rate_end_radps: -0.35,
        },
        SegmentSpec {
            duration_s: 3.0,
            speed_start_mps: 10.0,
            speed_end_mps: 12.0,
            yaw_rate_start_radps: -0.35,
            yaw_rate_end_radps: 0.0,
        },
        SegmentSpec {
            duration_s: 2.0,
            speed_start_mps: 12.0,
            speed_end_mps: 6.0,
            yaw_rate_start_radps: 0.0,
            yaw_rate_end_radps: 0.2,
        },
    ]
}

impl ScenarioConfig {
    /// Validates the configuration, listing every offending field.
    pub fn validate(&self) -> Result<()> {
        let mut fields = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                fields.push(msg.to_string());
            }
        };
        check(
            self.duration_s.is_finite() && self.duration_s > 0.0,
            "duration_s must be positive",
        );
        check(
            self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0,
            "frame_rate_hz must be positive",
        );
        check(
            self.imu_rate_hz.is_finite() && self.imu_rate_hz >= self.frame_rate_hz,
            "imu_rate_hz must be at least frame_rate_hz",
        );
        check(
            self.stationary_duration_s.is_finite() && self.stationary_duration_s >= 0.0,
            "stationary_duration_s must be non-negative",
        );
        check(
            self.mount.x.is_finite() && self.mount.y.is_finite(),
            "mount position must be finite",
        );
        check(
            self.imu_model.scale.is_finite() && self.imu_model.scale > 0.0,
            "imu_model.scale must be positive",
        );
        check(
            self.imu_model.bias.is_finite(),
            "imu_model.bias must be finite",
        );
        check(
            self.imu_model.noise_std.is_finite() && self.imu_model.noise_std >= 0.0,
            "imu_model.noise_std must be non-negative",
        );
        check(!self.segments.is_empty(), "segments must not be empty");
        for (i, seg) in self.segments.iter().enumerate() {
            let ok = seg.duration_s.is_finite()
                && seg.duration_s > 0.0
                && seg.speed_start_mps.is_finite()
                && seg.speed_end_mps.is_finite()
                && seg.speed_start_mps >= 0.0
                && seg.speed_end_mps >= 0.0
                && seg.yaw_rate_start_radps.is_finite()
                && seg.yaw_rate_end_radps.is_finite();
            check(
                ok,
                &format!("segments[{i}] has a non-finite or negative entry"),
            );
        }
        check(
            self.population.mover_speed_min_mps >= 0.0
                && self.population.mover_speed_max_mps >= self.population.mover_speed_min_mps,
            "population mover speed range is inverted or negative",
        );
        check(
            (0.0..1.0).contains(&self.population.clutter_ratio),
            "population.clutter_ratio must lie in [0, 1)",
        );
        check(
            self.noise.sigma_azimuth_rad.is_finite() && self.noise.sigma_azimuth_rad >= 0.0,
            "noise.sigma_azimuth_rad must be non-negative",
        );
        check(
            self.noise.sigma_doppler_mps.is_finite() && self.noise.sigma_doppler_mps >= 0.0,
            "noise.sigma_doppler_mps must be non-negative",
        );
        check(
            self.noise.accel_doppler_coeff_s.is_finite()
                && self.noise.accel_doppler_coeff_s >= 0.0,
            "noise.accel_doppler_coeff_s must be non-negative",
        );
        check(
            self.sensor.fov_half_angle_rad > 0.0
                && self.sensor.fov_half_angle_rad <= std::f64::consts::PI,
            "sensor.fov_half_angle_rad must lie in (0, pi]",
        );
        check(
            self.sensor.range_min_m >= 0.0 && self.sensor.range_max_m > self.sensor.range_min_m,
            "sensor range interval is empty or negative",
        );
        check(
            self.sensor.clutter_doppler_max_mps.is_finite()
                && self.sensor.clutter_doppler_max_mps > 0.0,
            "sensor.clutter_doppler_max_mps must be positive",
        );
        if fields.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { fields })
        }
    }

    /// Stationary warm-up plus driving time (s).
    pub fn total_duration(&self) -> f64 {
        self.stationary_duration_s + self.duration_s
    }
}

/// Evaluates the speed / yaw-rate / acceleration profile of a scenario at
/// any time: zero during the warm-up, then the cycled segment pattern.
#[derive(Debug, Clone)]
pub struct MotionProfile {
    stationary: f64,
    driving: f64,
    segments: Vec<SegmentSpec>,
    pattern_duration: f64,
}

impl MotionProfile {
    pub fn new(stationary: f64, driving: f64, segments: Vec<SegmentSpec>) -> MotionProfile {
        let pattern_duration = segments.iter().map(|s| s.duration_s).sum();
        MotionProfile {
            stationary,
            driving,
            segments,
            pattern_duration,
        }
    }

    pub fn from_config(cfg: &ScenarioConfig) -> MotionProfile {
        MotionProfile::new(
            cfg.stationary_duration_s,
            cfg.duration_s,
            cfg.segments.clone(),
        )
    }

    pub fn total_duration(&self) -> f64 {
        self.stationary + self.driving
    }

    /// `(speed, yaw_rate, longitudinal acceleration)` at time `t`.
    pub fn sample(&self, t: f64) -> (f64, f64, f64) {
        let u = t - self.stationary;
        if u < 0.0 || self.segments.is_empty() {
            return (0.0, 0.0, 0.0);
        }
        let u = u.min(self.driving).rem_euclid(self.pattern_duration);
        let mut start = 0.0;
        let last = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            if u < start + seg.duration_s || i == last {
                let f = ((u - start) / seg.duration_s).clamp(0.0, 1.0);
                let speed = seg.speed_start_mps + f * (seg.speed_end_mps - seg.speed_start_mps);
                let yaw = seg.yaw_rate_start_radps
                    + f * (seg.yaw_rate_end_radps - seg.yaw_rate_start_radps);
                let accel = (seg.speed_end_mps - seg.speed_start_mps) / seg.duration_s;
                return (speed, yaw, accel);
            }
            start += seg.duration_s;
        }
        unreachable!("segment lookup covers the full pattern");
    }
}

/// Forward-Euler integration of the profile at the given sample rate,
/// starting from the origin with zero heading. Speeds and yaw rates are the
/// exact profile values at each sample time.
pub fn integrate_trajectory(profile: &MotionProfile, duration: f64, rate: f64) -> Vec<EgoState> {
    let dt = 1.0 / rate;
    let steps = (duration * rate).floor() as usize;
    let mut states = Vec::with_capacity(steps + 1);
    let (speed, yaw_rate, _) = profile.sample(0.0);
    states.push(EgoState {
        t: 0.0,
        speed,
        yaw_rate,
        heading: Angle::ZERO,
        position: Vec2::ZERO,
    });
    for k in 1..=steps {
        let prev: EgoState = *states.last().unwrap();
        let t = k as f64 * dt;
        let heading = Angle::new(prev.heading.radians() + prev.yaw_rate * dt);
        let position = prev.position
            + Vec2::new(prev.heading.cos(), prev.heading.sin()) * (prev.speed * dt);
        let (speed, yaw_rate, _) = profile.sample(t);
        states.push(EgoState {
            t,
            speed,
            yaw_rate,
            heading,
            position,
        });
    }
    states
}

/// What a rendered detection actually is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionLabel {
    Static,
    Mover,
    Clutter,
}

/// Doppler reading for a target moving with `target_v` when the sensor
/// moves with `sensor_v` (both in the radar frame): the static model
/// applied to the relative velocity.
pub fn relative_doppler(sensor_v: Vec2, target_v: Vec2, azimuth: Angle) -> f64 {
    predicted_doppler(sensor_v - target_v, azimuth)
}

/// Renders one radar frame for the given ego state.
///
/// Static targets follow the Doppler model exactly before noise; movers get
/// uniform random ground velocities; clutter is uniform in bearing and
/// Doppler. Bearing noise is applied after the Doppler is computed from the
/// true bearing, so it acts as model error, and `accel` adds the configured
/// acceleration-proportional Doppler spread.
#[allow(clippy::too_many_arguments)]
pub fn render_frame(
    ego: &EgoState,
    mount: &MountPose,
    population: &FramePopulation,
    noise: &NoiseSpec,
    sensor: &SensorSpec,
    accel: f64,
    rng: &mut ChaCha8Rng,
) -> (RadarFrame, Vec<DetectionLabel>) {
    let v_sensor_radar = crate::geom::sensor_velocity(ego, mount).rotated(-mount.yaw);
    let sigma_d = (noise.sigma_doppler_mps.powi(2)
        + (noise.accel_doppler_coeff_s * accel).powi(2))
    .sqrt();
    let doppler_noise = Normal::new(0.0, sigma_d).ok();
    let azimuth_noise = Normal::new(0.0, noise.sigma_azimuth_rad).ok();
    // Keep drawn bearings far enough from the FoV edge that bearing noise
    // cannot push the measurement outside.
    let margin = (4.0 * noise.sigma_azimuth_rad).min(0.5 * sensor.fov_half_angle_rad);
    let lim = sensor.fov_half_angle_rad - margin;

    let mut detections = Vec::new();
    let mut labels = Vec::new();
    let mut push = |rng: &mut ChaCha8Rng, true_azimuth: Angle, doppler: f64, label| {
        let measured_azimuth = match (label, azimuth_noise) {
            (DetectionLabel::Clutter, _) | (_, None) => true_azimuth,
            (_, Some(n)) => Angle::new(true_azimuth.radians() + n.sample(rng)),
        };
        let doppler = match (label, doppler_noise) {
            (DetectionLabel::Clutter, _) | (_, None) => doppler,
            (_, Some(n)) => doppler + n.sample(rng),
        };
        detections.push(Detection {
            azimuth: measured_azimuth,
            doppler,
            range: rng.gen_range(sensor.range_min_m..sensor.range_max_m),
            amplitude: rng.gen_range(5.0..40.0),
        });
        labels.push(label);
    };

    for _ in 0..population.static_count {
        let azimuth = Angle::new(rng.gen_range(-lim..=lim));
        push(
            rng,
            azimuth,
            predicted_doppler(v_sensor_radar, azimuth),
            DetectionLabel::Static,
        );
    }
    for _ in 0..population.mover_count {
        let azimuth = Angle::new(rng.gen_range(-lim..=lim));
        let speed = rng.gen_range(
            population.mover_speed_min_mps..=population.mover_speed_max_mps,
        );
        let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let v_world = Vec2::new(speed * heading.cos(), speed * heading.sin());
        let v_target_radar = v_world.rotated(-(ego.heading + mount.yaw));
        push(
            rng,
            azimuth,
            relative_doppler(v_sensor_radar, v_target_radar, azimuth),
            DetectionLabel::Mover,
        );
    }
    for _ in 0..population.clutter_count() {
        let azimuth = Angle::new(
            rng.gen_range(-sensor.fov_half_angle_rad..=sensor.fov_half_angle_rad),
        );
        let doppler =
            rng.gen_range(-sensor.clutter_doppler_max_mps..=sensor.clutter_doppler_max_mps);
        push(rng, azimuth, doppler, DetectionLabel::Clutter);
    }

    (
        RadarFrame {
            t: ego.t,
            detections,
        },
        labels,
    )
}

/// A complete simulated scenario with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// Ego states on the gyro sample grid.
    pub ego: Vec<EgoState>,
    pub frames: Vec<RadarFrame>,
    pub imu: Vec<ImuSample>,
    /// Per-frame, per-detection labels aligned with `frames`.
    pub labels: Vec<Vec<DetectionLabel>>,
}

/// Ground-truth sidecar the simulator writes next to the sensor data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mount: MountPose,
    pub imu_model: ImuModel,
    pub ego: Vec<EgoState>,
    pub labels: Vec<Vec<DetectionLabel>>,
}

impl Scenario {
    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            mount: self.config.mount,
            imu_model: self.config.imu_model,
            ego: self.ego.clone(),
            labels: self.labels.clone(),
        }
    }
}

/// Generates the full scenario for a validated configuration.
///
/// Frame timestamps snap to the gyro sample grid, so every frame has an
/// exactly matching ego state and gyro sample; at typical rates this adds
/// sub-half-sample jitter to the frame spacing, as real sensors do.
/// Everything is drawn from one generator seeded with `config.seed`:
/// the same configuration always yields the identical scenario.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let profile = MotionProfile::from_config(config);
    let total = config.total_duration();
    let ego = integrate_trajectory(&profile, total, config.imu_rate_hz);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let gyro_noise = if config.imu_model.noise_std > 0.0 {
        Normal::new(0.0, config.imu_model.noise_std).ok()
    } else {
        None
    };
    let imu: Vec<ImuSample> = ego
        .iter()
        .map(|state| {
            let noise = gyro_noise.map_or(0.0, |n| n.sample(&mut rng));
            ImuSample {
                t: state.t,
                yaw_rate: config.imu_model.measure(state.yaw_rate, noise),
            }
        })
        .collect();

    let mut frames = Vec::new();
    let mut labels = Vec::new();
    let frame_count = (total * config.frame_rate_hz).floor() as usize + 1;
    let mut prev_idx = usize::MAX;
    for k in 0..frame_count {
        let t_frame = k as f64 / config.frame_rate_hz;
        let idx = ((t_frame * config.imu_rate_hz).round() as usize).min(ego.len() - 1);
        if idx == prev_idx {
            continue;
        }
        prev_idx = idx;
        let state = &ego[idx];
        let (_, _, accel) = profile.sample(state.t);
        let (frame, frame_labels) = render_frame(
            state,
            &config.mount,
            &config.population,
            &config.noise,
            &config.sensor,
            accel,
            &mut rng,
        );
        frames.push(frame);
        labels.push(frame_labels);
    }

    Ok(Scenario {
        config: config.clone(),
        ego,
        frames,
        imu,
        labels,
    })
}
