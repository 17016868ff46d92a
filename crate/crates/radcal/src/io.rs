//! File formats: sensor CSV logs, ground-truth JSON, and results reports.
//!
//! All CSV files written by this crate start with the comment line
//! `# radcal-v1`; readers accept untagged files as the current version and
//! reject files tagged with anything else. Floats are written in shortest
//! round-trip form, so write-then-read reproduces values bit for bit.
//! Results reports are JSON with sorted keys and floats rounded to twelve
//! significant digits, so a repeated run diffs clean.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{normalize_angle, Vec2};
use crate::imu::ImuSample;
use crate::motion::{Detection, RadarFrame, WeightVector};
use crate::sim::GroundTruth;
use crate::traj::{Pose, Trajectory};
use serde::{Deserialize, Serialize};

/// Format tag written as the first line of every CSV file.
pub const FORMAT_TAG: &str = "# radcal-v1";

const RADAR_HEADER: [&str; 5] = ["t_s", "azimuth_rad", "doppler_mps", "range_m", "amplitude"];
const IMU_HEADER: [&str; 2] = ["t_s", "yaw_rate_radps"];
const WEIGHT_HEADER: [&str; 2] = ["t_s", "weight"];
const TRAJECTORY_HEADER: [&str; 4] = ["t_s", "x_m", "y_m", "heading_rad"];

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a tagged CSV file into records, validating the version tag and the
/// header, and returning `(line_number, fields)` pairs.
fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Some(first) = text.lines().next() {
        let first = first.trim();
        if first.starts_with('#') && first != FORMAT_TAG {
            return Err(parse_error(
                path,
                1,
                format!("unsupported format tag {first:?}, expected {FORMAT_TAG:?}"),
            ));
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    {
        let got = reader
            .headers()
            .map_err(|e| parse_error(path, 1, e.to_string()))?;
        if got.iter().ne(header.iter().copied()) {
            return Err(parse_error(
                path,
                got.position().map_or(2, |p| p.line()),
                format!(
                    "unexpected header {:?}, expected {:?}",
                    got.iter().collect::<Vec<_>>().join(","),
                    header.join(",")
                ),
            ));
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, got {}", header.len(), record.len()),
            ));
        }
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(rows)
}

fn parse_f64(path: &Path, line: u64, name: &str, raw: &str) -> Result<f64> {
    let value: f64 = raw
        .parse()
        .map_err(|_| parse_error(path, line, format!("{name} {raw:?} is not a number")))?;
    if !value.is_finite() {
        return Err(parse_error(path, line, format!("{name} {raw:?} is not finite")));
    }
    Ok(value)
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(file))
}

/// Writes radar frames as one row per detection, grouped by frame
/// timestamp.
pub fn write_radar_frames(path: &Path, frames: &[RadarFrame]) -> Result<()> {
    let mut out = create(path)?;
    let fail = |e: std::io::Error| Error::io(path, e);
    writeln!(out, "{FORMAT_TAG}").map_err(fail)?;
    writeln!(out, "{}", RADAR_HEADER.join(",")).map_err(fail)?;
    for frame in frames {
        for d in &frame.detections {
            writeln!(
                out,
                "{},{},{},{},{}",
                frame.t,
                d.azimuth.radians(),
                d.doppler,
                d.range,
                d.amplitude
            )
            .map_err(fail)?;
        }
    }
    out.flush().map_err(fail)
}

/// Reads radar frames, grouping consecutive rows with the same timestamp.
/// Timestamps must be non-decreasing across rows.
pub fn read_radar_frames(path: &Path) -> Result<Vec<RadarFrame>> {
    let rows = read_csv(path, &RADAR_HEADER)?;
    let mut frames: Vec<RadarFrame> = Vec::new();
    for (line, fields) in rows {
        let t = parse_f64(path, line, "t_s", &fields[0])?;
        let azimuth = normalize_angle(parse_f64(path, line, "azimuth_rad", &fields[1])?)
            .map_err(|e| parse_error(path, line, e.to_string()))?;
        let detection = Detection {
            azimuth,
            doppler: parse_f64(path, line, "doppler_mps", &fields[2])?,
            range: parse_f64(path, line, "range_m", &fields[3])?,
            amplitude: parse_f64(path, line, "amplitude", &fields[4])?,
        };
        match frames.last_mut() {
            Some(frame) if frame.t == t => frame.detections.push(detection),
            Some(frame) if frame.t > t => {
                return Err(parse_error(
                    path,
                    line,
                    format!("timestamp {t} decreases below {}", frame.t),
                ));
            }
            _ => frames.push(RadarFrame {
                t,
                detections: vec![detection],
            }),
        }
    }
    Ok(frames)
}

/// Writes gyro samples, one row per sample.
pub fn write_imu_samples(path: &Path, samples: &[ImuSample]) -> Result<()> {
    let mut out = create(path)?;
    let fail = |e: std::io::Error| Error::io(path, e);
    writeln!(out, "{FORMAT_TAG}").map_err(fail)?;
    writeln!(out, "{}", IMU_HEADER.join(",")).map_err(fail)?;
    for s in samples {
        writeln!(out, "{},{}", s.t, s.yaw_rate).map_err(fail)?;
    }
    out.flush().map_err(fail)
}

/// Reads gyro samples; timestamps must be strictly increasing.
pub fn read_imu_samples(path: &Path) -> Result<Vec<ImuSample>> {
    let rows = read_csv(path, &IMU_HEADER)?;
    let mut samples: Vec<ImuSample> = Vec::new();
    for (line, fields) in rows {
        let t = parse_f64(path, line, "t_s", &fields[0])?;
        let yaw_rate = parse_f64(path, line, "yaw_rate_radps", &fields[1])?;
        if let Some(prev) = samples.last() {
            if t <= prev.t {
                return Err(parse_error(
                    path,
                    line,
                    format!("timestamp {t} does not increase past {}", prev.t),
                ));
            }
        }
        samples.push(ImuSample { t, yaw_rate });
    }
    Ok(samples)
}

/// Writes a trajectory as one pose per row, for external plotting.
pub fn write_trajectory(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let mut out = create(path)?;
    let fail = |e: std::io::Error| Error::io(path, e);
    writeln!(out, "{FORMAT_TAG}").map_err(fail)?;
    writeln!(out, "{}", TRAJECTORY_HEADER.join(",")).map_err(fail)?;
    for pose in &trajectory.poses {
        writeln!(
            out,
            "{},{},{},{}",
            pose.t,
            pose.position.x,
            pose.position.y,
            pose.heading.radians()
        )
        .map_err(fail)?;
    }
    out.flush().map_err(fail)
}

/// Reads a trajectory; timestamps must be strictly increasing.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let rows = read_csv(path, &TRAJECTORY_HEADER)?;
    let mut poses: Vec<Pose> = Vec::new();
    for (line, fields) in rows {
        let t = parse_f64(path, line, "t_s", &fields[0])?;
        if let Some(prev) = poses.last() {
            if t <= prev.t {
                return Err(parse_error(
                    path,
                    line,
                    format!("timestamp {t} does not increase past {}", prev.t),
                ));
            }
        }
        let heading = normalize_angle(parse_f64(path, line, "heading_rad", &fields[3])?)
            .map_err(|e| parse_error(path, line, e.to_string()))?;
        poses.push(Pose {
            t,
            position: Vec2::new(
                parse_f64(path, line, "x_m", &fields[1])?,
                parse_f64(path, line, "y_m", &fields[2])?,
            ),
            heading,
        });
    }
    Ok(Trajectory { poses })
}

/// Writes per-detection weights aligned with the given frames, one row per
/// detection.
pub fn write_weights(path: &Path, frames: &[RadarFrame], weights: &[WeightVector]) -> Result<()> {
    if frames.len() != weights.len() {
        return Err(Error::domain(
            "weight export",
            format!("{} frames but {} weight vectors", frames.len(), weights.len()),
        ));
    }
    let mut out = create(path)?;
    let fail = |e: std::io::Error| Error::io(path, e);
    writeln!(out, "{FORMAT_TAG}").map_err(fail)?;
    writeln!(out, "{}", WEIGHT_HEADER.join(",")).map_err(fail)?;
    for (frame, w) in frames.iter().zip(weights) {
        for value in w.iter() {
            writeln!(out, "{},{}", frame.t, value).map_err(fail)?;
        }
    }
    out.flush().map_err(fail)
}

/// Reads per-detection weights and aligns them with `frames`: each frame
/// must contribute exactly one row per detection with a matching timestamp,
/// in frame order.
pub fn read_weights(path: &Path, frames: &[RadarFrame]) -> Result<Vec<WeightVector>> {
    let rows = read_csv(path, &WEIGHT_HEADER)?;
    let mut iter = rows.into_iter();
    let mut out = Vec::with_capacity(frames.len());
    for (index, frame) in frames.iter().enumerate() {
        let mut values = Vec::with_capacity(frame.detections.len());
        for _ in 0..frame.detections.len() {
            let Some((line, fields)) = iter.next() else {
                return Err(Error::Alignment {
                    frame: index,
                    message: format!(
                        "weight rows ran out; frame at t={} needs {} rows",
                        frame.t,
                        frame.detections.len()
                    ),
                });
            };
            let t = parse_f64(path, line, "t_s", &fields[0])?;
            if (t - frame.t).abs() > 1e-9 {
                return Err(Error::Alignment {
                    frame: index,
                    message: format!("weight row at t={t} does not match frame at t={}", frame.t),
                });
            }
            let w = parse_f64(path, line, "weight", &fields[1])?;
            if !(0.0..=1.0).contains(&w) {
                return Err(parse_error(
                    path,
                    line,
                    format!("weight {w} lies outside [0, 1]"),
                ));
            }
            values.push(w);
        }
        out.push(WeightVector::new(values)?);
    }
    if let Some((line, _)) = iter.next() {
        return Err(parse_error(
            path,
            line,
            "extra weight rows after the last frame".to_string(),
        ));
    }
    Ok(out)
}

/// Writes the simulator's ground-truth sidecar as pretty JSON.
pub fn write_ground_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    let text = serde_json::to_string_pretty(truth)
        .map_err(|e| Error::domain("ground-truth serialization", e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line() as u64, e.to_string()))
}

/// One estimator's calibration output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    /// Estimated mounting angle (rad).
    pub theta_rad: f64,
    /// Same angle in degrees, for readability.
    pub theta_deg: f64,
    /// Estimated inverse yaw-rate scale (1 when the estimator fixes it).
    pub s_prime: f64,
    /// Frames that carried weight in the solve.
    pub frames_used: usize,
    /// Weighted RMS of the per-frame angle residuals (rad).
    pub residual_rms_rad: f64,
    pub converged: bool,
    /// True when the solver fell back to the weighted-mean estimator.
    pub fallback: bool,
}

/// Pipeline counters that explain how much data survived each stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub frames_total: usize,
    /// Frames dropped by the speed / yaw-rate gate.
    pub frames_gated: usize,
    /// Frames whose inlier set was too sparse for a covariance.
    pub frames_sparse: usize,
    /// Frames where motion estimation failed outright.
    pub frames_failed: usize,
    /// Observations whose lateral ratio had to be clamped.
    pub chi_clamped: usize,
    /// Gyro bias removed before calibration (rad/s).
    pub bias_estimate_radps: f64,
    /// Total stationary time the bias was averaged over (s).
    pub bias_window_s: f64,
}

/// Top-level results document written by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsReport {
    /// Crate version that produced the report.
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// Echo of the configuration the run used.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config: Option<serde_json::Value>,
    /// Results keyed by estimator name.
    pub estimates: BTreeMap<String, EstimatorResult>,
    pub diagnostics: Diagnostics,
    /// Free-form aggregate section (benchmark tables, trajectory errors).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub summary: Option<serde_json::Value>,
}

impl ResultsReport {
    pub fn new(estimates: BTreeMap<String, EstimatorResult>, diagnostics: Diagnostics) -> Self {
        ResultsReport {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            config: None,
            estimates,
            diagnostics,
            summary: None,
        }
    }
}

/// Rounds every float in a JSON tree to twelve significant digits so that
/// reports are stable under reordering of floating-point work.
fn round_floats(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                if n.is_f64() {
                    let rounded: f64 = format!("{x:.11e}").parse().unwrap();
                    return Value::Number(
                        serde_json::Number::from_f64(rounded).unwrap_or_else(|| n.clone()),
                    );
                }
            }
            Value::Number(n)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| (k, round_floats(v)))
                .collect(),
        ),
        other => other,
    }
}

/// Writes a results report as pretty JSON with sorted keys and rounded
/// floats; writing the same results twice yields identical bytes.
pub fn write_report(path: &Path, report: &ResultsReport) -> Result<()> {
    let value = serde_json::to_value(report)
        .map_err(|e| Error::domain("report serialization", e.to_string()))?;
    let text = serde_json::to_string_pretty(&round_floats(value))
        .map_err(|e| Error::domain("report serialization", e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<ResultsReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line() as u64, e.to_string()))
}
