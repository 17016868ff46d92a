//! `radcal` — simulate driving data, calibrate the radar mounting angle,
//! benchmark the estimators, and pretty-print reports.
//!
//! Logging goes to stderr and is controlled by the `RADCAL_LOG` environment
//! variable (e.g. `RADCAL_LOG=info`). Exit codes: 0 success, 2 bad
//! configuration or usage, 3 not enough usable data, 4 unreadable or
//! malformed data files, 1 anything else.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use radcal::geom::MountPose;
use radcal::io::{
    read_imu_samples, read_radar_frames, read_report, read_weights, write_ground_truth,
    write_imu_samples, write_radar_frames, write_report, Diagnostics, ResultsReport,
};
use radcal::pipeline::{calibrate, Estimator, PipelineConfig, WeightSource};
use radcal::sim::{generate_scenario, FramePopulation, NoiseSpec, ScenarioConfig, SegmentSpec};
use radcal::traj::{reconstruct_trajectory, relative_trajectory_error, Trajectory};
use radcal::Error;

#[derive(Parser)]
#[command(
    name = "radcal",
    version,
    about = "Radar mounting-angle calibration toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated drive: radar.csv, imu.csv, ground_truth.json.
    Simulate {
        /// Scenario configuration (JSON); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override the configured random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the mounting angle from radar and gyro logs.
    Estimate {
        /// Radar detections CSV.
        #[arg(long)]
        radar: PathBuf,
        /// Gyro samples CSV.
        #[arg(long)]
        imu: PathBuf,
        /// Optional per-detection weights CSV; RANSAC runs when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Estimation configuration (JSON); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the full report here (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Which estimator to run.
        #[arg(long, value_enum, default_value_t = EstimatorArg::All)]
        estimator: EstimatorArg,
        /// Sensor x-offset on the vehicle (m); overrides the config.
        #[arg(long)]
        sensor_x: Option<f64>,
    },
    /// Sweep simulated scenes and aggregate estimator accuracy.
    Benchmark {
        /// Benchmark configuration (JSON); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Pretty-print a results report produced by estimate or benchmark.
    Report {
        /// Report JSON path.
        input: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    All,
    Wlsq,
    Mean,
    Kabsch,
    Odr,
}

impl EstimatorArg {
    fn estimators(self) -> Vec<Estimator> {
        match self {
            EstimatorArg::All => Estimator::ALL.to_vec(),
            EstimatorArg::Wlsq => vec![Estimator::Wlsq],
            EstimatorArg::Mean => vec![Estimator::Mean],
            EstimatorArg::Kabsch => vec![Estimator::Kabsch],
            EstimatorArg::Odr => vec![Estimator::Odr],
        }
    }
}

/// Configuration for `estimate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct EstimateConfig {
    /// Sensor x-position on the vehicle, forward of the rear axle (m).
    sensor_x_m: f64,
    pipeline: PipelineConfig,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            sensor_x_m: 3.6,
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Configuration for `benchmark`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BenchmarkConfig {
    /// Base scene; duration, Doppler noise, and seed vary per cell.
    scenario: ScenarioConfig,
    pipeline: PipelineConfig,
    /// Scenes (seeds) per cell.
    scenes: usize,
    /// Calibration interval lengths to sweep (s).
    intervals_s: Vec<f64>,
    /// Doppler noise levels to sweep (m/s).
    noise_levels_mps: Vec<f64>,
    base_seed: u64,
    /// Mount-angle biases for the trajectory-error sweep (deg).
    rte_biases_deg: Vec<f64>,
    /// Segment length of the trajectory-error metric (m).
    rte_segment_m: f64,
    /// Straight-route length used by the trajectory-error sweep.
    rte_route_duration_s: f64,
    rte_route_speed_mps: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            scenario: ScenarioConfig::default(),
            pipeline: PipelineConfig::default(),
            scenes: 20,
            intervals_s: vec![5.0, 10.0, 25.0, 60.0],
            noise_levels_mps: vec![0.05, 0.1, 0.2],
            base_seed: 1000,
            rte_biases_deg: vec![0.0, 0.05, 0.1, 0.5],
            rte_segment_m: 50.0,
            rte_route_duration_s: 200.0,
            rte_route_speed_mps: 10.0,
        }
    }
}

/// Top-level CLI failure; decides the exit code.
enum CliError {
    /// Unusable configuration: bad JSON, bad values, bad combinations.
    Config(String),
    /// Failure from the calibration library.
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        CliError::Lib(e)
    }
}

fn exit_code(error: &CliError) -> u8 {
    match error {
        CliError::Config(_) => 2,
        CliError::Lib(e) => match e {
            Error::InvalidConfig { .. } => 2,
            Error::InsufficientData { .. } => 3,
            Error::Io { .. } | Error::Parse { .. } => 4,
            _ => 1,
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RADCAL_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Config(msg) => eprintln!("error: {msg}"),
                CliError::Lib(err) => eprintln!("error: {err}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out, seed } => simulate(config.as_deref(), &out, seed),
        Command::Estimate {
            radar,
            imu,
            weights,
            config,
            out,
            estimator,
            sensor_x,
        } => estimate(
            &radar,
            &imu,
            weights.as_deref(),
            config.as_deref(),
            out.as_deref(),
            estimator,
            sensor_x,
        ),
        Command::Benchmark { config, out, jobs } => benchmark(config.as_deref(), &out, jobs),
        Command::Report { input } => report(&input),
    }
}

/// Reads a JSON config file, or the default when no path is given.
fn load_config<T: Default + serde::de::DeserializeOwned>(
    path: Option<&Path>,
) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn simulate(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg: ScenarioConfig = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let scenario = generate_scenario(&cfg)?;
    create_dir(out)?;

    write_radar_frames(&out.join("radar.csv"), &scenario.frames)?;
    write_imu_samples(&out.join("imu.csv"), &scenario.imu)?;
    write_ground_truth(&out.join("ground_truth.json"), &scenario.ground_truth())?;
    let echo = serde_json::to_string_pretty(&cfg)
        .map_err(|e| CliError::Config(format!("cannot serialize scenario config: {e}")))?;
    fs::write(out.join("scenario.json"), echo + "\n").map_err(|e| Error::Io {
        path: out.join("scenario.json"),
        source: e,
    })?;

    let detections: usize = scenario.frames.iter().map(|f| f.detections.len()).sum();
    log::info!(
        "simulated {:.1} s at seed {}",
        cfg.total_duration(),
        cfg.seed
    );
    println!(
        "wrote {} frames ({} detections, {:.1} s, seed {}) to {}",
        scenario.frames.len(),
        detections,
        cfg.total_duration(),
        cfg.seed,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    radar: &Path,
    imu: &Path,
    weights: Option<&Path>,
    config: Option<&Path>,
    out: Option<&Path>,
    estimator: EstimatorArg,
    sensor_x: Option<f64>,
) -> Result<(), CliError> {
    let mut cfg: EstimateConfig = load_config(config)?;
    if let Some(x) = sensor_x {
        cfg.sensor_x_m = x;
    }
    if !(cfg.sensor_x_m.is_finite() && cfg.sensor_x_m != 0.0) {
        return Err(CliError::Config(
            "sensor_x_m must be finite and non-zero; the lateral-velocity model \
             needs a forward sensor offset"
                .to_string(),
        ));
    }

    let frames = read_radar_frames(radar)?;
    let samples = read_imu_samples(imu)?;
    log::info!("loaded {} frames, {} gyro samples", frames.len(), samples.len());
    let weight_source = match weights {
        Some(path) => WeightSource::External(read_weights(path, &frames)?),
        None => WeightSource::Ransac,
    };

    let (estimates, output) = calibrate(
        &frames,
        &samples,
        cfg.sensor_x_m,
        &weight_source,
        &estimator.estimators(),
        &cfg.pipeline,
    )?;

    let mut report = ResultsReport::new(estimates, output.diagnostics.clone());
    report.config = Some(
        serde_json::to_value(&cfg)
            .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?,
    );
    print_estimates(&report);
    if let Some(path) = out {
        write_report(path, &report)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn print_estimates(report: &ResultsReport) {
    println!(
        "{:<8} {:>12} {:>10} {:>8} {:>12} {:>10} {:>9}",
        "solver", "theta_deg", "s_prime", "frames", "rms_rad", "converged", "fallback"
    );
    for (name, r) in &report.estimates {
        println!(
            "{:<8} {:>12.5} {:>10.6} {:>8} {:>12.3e} {:>10} {:>9}",
            name,
            r.theta_deg,
            r.s_prime,
            r.frames_used,
            r.residual_rms_rad,
            if r.converged { "yes" } else { "no" },
            if r.fallback { "yes" } else { "no" }
        );
    }
    let d = &report.diagnostics;
    println!(
        "frames: {} total, {} gated, {} sparse, {} failed, {} clamped; \
         gyro bias {:.5} rad/s over {:.1} s stationary",
        d.frames_total,
        d.frames_gated,
        d.frames_sparse,
        d.frames_failed,
        d.chi_clamped,
        d.bias_estimate_radps,
        d.bias_window_s
    );
}

/// One benchmark cell: a scene estimated at one noise level and interval.
struct CellResult {
    noise: f64,
    interval: f64,
    scene: usize,
    theta_deg: BTreeMap<String, f64>,
}

fn benchmark(config: Option<&Path>, out: &Path, jobs: Option<usize>) -> Result<(), CliError> {
    let cfg: BenchmarkConfig = load_config(config)?;
    if cfg.scenes == 0 || cfg.intervals_s.is_empty() || cfg.noise_levels_mps.is_empty() {
        return Err(CliError::Config(
            "benchmark needs at least one scene, interval, and noise level".to_string(),
        ));
    }
    create_dir(out)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;

    // Deterministic job list; rayon's collect keeps the order.
    let mut specs = Vec::new();
    for (ni, &noise) in cfg.noise_levels_mps.iter().enumerate() {
        for (ii, &interval) in cfg.intervals_s.iter().enumerate() {
            for scene in 0..cfg.scenes {
                specs.push((ni, noise, ii, interval, scene));
            }
        }
    }
    log::info!("running {} benchmark cells", specs.len());
    let cells: Result<Vec<CellResult>, Error> = pool.install(|| {
        specs
            .par_iter()
            .map(|&(ni, noise, ii, interval, scene)| {
                let scenario_cfg = ScenarioConfig {
                    duration_s: interval,
                    noise: NoiseSpec {
                        sigma_doppler_mps: noise,
                        ..cfg.scenario.noise
                    },
                    seed: cfg.base_seed
                        ^ (ni as u64) << 40
                        ^ (ii as u64) << 32
                        ^ scene as u64,
                    ..cfg.scenario.clone()
                };
                let scenario = generate_scenario(&scenario_cfg)?;
                let (estimates, _) = calibrate(
                    &scenario.frames,
                    &scenario.imu,
                    scenario_cfg.mount.x,
                    &WeightSource::Ransac,
                    &Estimator::ALL,
                    &cfg.pipeline,
                )?;
                Ok(CellResult {
                    noise,
                    interval,
                    scene,
                    theta_deg: estimates
                        .into_iter()
                        .map(|(name, r)| (name, r.theta_deg))
                        .collect(),
                })
            })
            .collect()
    });
    let cells = cells?;
    let truth_deg = cfg.scenario.mount.yaw.degrees();

    write_scene_table(&out.join("theta_per_scene.csv"), &cells, truth_deg)?;
    let aggregates = aggregate(&cells, &cfg, truth_deg);
    write_aggregate_table(
        &out.join("mae_vs_interval.csv"),
        "mae_deg",
        &aggregates,
        |a| a.mae,
    )?;
    write_aggregate_table(
        &out.join("variance_vs_interval.csv"),
        "variance_deg2",
        &aggregates,
        |a| a.variance,
    )?;

    let rte_rows = rte_sweep(&cfg)?;
    write_rte_table(&out.join("rte_vs_bias.csv"), &rte_rows)?;

    let mut report = ResultsReport::new(BTreeMap::new(), Diagnostics::default());
    report.seed = Some(cfg.base_seed);
    report.config = Some(
        serde_json::to_value(&cfg)
            .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?,
    );
    report.summary = Some(serde_json::json!({
        "cells": cells.len(),
        "truth_theta_deg": truth_deg,
        "mae_deg": aggregates
            .iter()
            .map(|a| serde_json::json!({
                "noise_mps": a.noise,
                "interval_s": a.interval,
                "estimator": a.estimator,
                "value": a.mae,
            }))
            .collect::<Vec<_>>(),
        "variance_deg2": aggregates
            .iter()
            .map(|a| serde_json::json!({
                "noise_mps": a.noise,
                "interval_s": a.interval,
                "estimator": a.estimator,
                "value": a.variance,
            }))
            .collect::<Vec<_>>(),
        "rte_m": rte_rows
            .iter()
            .map(|(bias, rte)| serde_json::json!({ "bias_deg": bias, "value": rte }))
            .collect::<Vec<_>>(),
    }));
    write_report(&out.join("report.json"), &report)?;
    println!(
        "benchmarked {} cells over {} noise levels x {} intervals x {} scenes; \
         tables in {}",
        cells.len(),
        cfg.noise_levels_mps.len(),
        cfg.intervals_s.len(),
        cfg.scenes,
        out.display()
    );
    Ok(())
}

struct Aggregate {
    noise: f64,
    interval: f64,
    estimator: String,
    mae: f64,
    variance: f64,
}

fn aggregate(cells: &[CellResult], cfg: &BenchmarkConfig, truth_deg: f64) -> Vec<Aggregate> {
    let mut rows = Vec::new();
    for &noise in &cfg.noise_levels_mps {
        for &interval in &cfg.intervals_s {
            for estimator in Estimator::ALL.map(|e| e.name()) {
                let thetas: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.noise == noise && c.interval == interval)
                    .filter_map(|c| c.theta_deg.get(estimator).copied())
                    .collect();
                if thetas.is_empty() {
                    continue;
                }
                let n = thetas.len() as f64;
                let mae = thetas.iter().map(|t| (t - truth_deg).abs()).sum::<f64>() / n;
                let mean = thetas.iter().sum::<f64>() / n;
                let variance = if thetas.len() > 1 {
                    thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                rows.push(Aggregate {
                    noise,
                    interval,
                    estimator: estimator.to_string(),
                    mae,
                    variance,
                });
            }
        }
    }
    rows
}

fn open_table(path: &Path, header: &str) -> Result<std::io::BufWriter<fs::File>, CliError> {
    let file = fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "# radcal-v1\n{header}").map_err(|e| {
        CliError::Lib(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    Ok(out)
}

fn write_scene_table(path: &Path, cells: &[CellResult], truth_deg: f64) -> Result<(), CliError> {
    let mut out = open_table(path, "noise_mps,interval_s,scene,estimator,theta_deg,error_deg")?;
    let fail = |e: std::io::Error| {
        CliError::Lib(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    };
    for cell in cells {
        for (estimator, theta) in &cell.theta_deg {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                cell.noise,
                cell.interval,
                cell.scene,
                estimator,
                theta,
                theta - truth_deg
            )
            .map_err(fail)?;
        }
    }
    out.flush().map_err(fail)
}

fn write_aggregate_table(
    path: &Path,
    value_name: &str,
    rows: &[Aggregate],
    pick: fn(&Aggregate) -> f64,
) -> Result<(), CliError> {
    let mut out = open_table(
        path,
        &format!("noise_mps,interval_s,estimator,{value_name}"),
    )?;
    let fail = |e: std::io::Error| {
        CliError::Lib(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    };
    for row in rows {
        writeln!(
            out,
            "{},{},{},{}",
            row.noise,
            row.interval,
            row.estimator,
            pick(row)
        )
        .map_err(fail)?;
    }
    out.flush().map_err(fail)
}

fn write_rte_table(path: &Path, rows: &[(f64, f64)]) -> Result<(), CliError> {
    let mut out = open_table(path, "bias_deg,rte_m")?;
    let fail = |e: std::io::Error| {
        CliError::Lib(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    };
    for (bias, rte) in rows {
        writeln!(out, "{bias},{rte}").map_err(fail)?;
    }
    out.flush().map_err(fail)
}

/// Trajectory error on a noise-free straight route while the mount angle
/// used for reconstruction is deliberately biased.
fn rte_sweep(cfg: &BenchmarkConfig) -> Result<Vec<(f64, f64)>, CliError> {
    let scenario_cfg = ScenarioConfig {
        duration_s: cfg.rte_route_duration_s,
        stationary_duration_s: 0.0,
        segments: vec![SegmentSpec::constant(
            cfg.rte_route_duration_s,
            cfg.rte_route_speed_mps,
            0.0,
        )],
        noise: NoiseSpec {
            sigma_azimuth_rad: 0.0,
            sigma_doppler_mps: 0.0,
            accel_doppler_coeff_s: 0.0,
        },
        population: FramePopulation {
            static_count: 40,
            mover_count: 0,
            mover_speed_min_mps: 3.0,
            mover_speed_max_mps: 15.0,
            clutter_ratio: 0.0,
        },
        seed: cfg.base_seed,
        ..cfg.scenario.clone()
    };
    let scenario = generate_scenario(&scenario_cfg)?;
    let output = radcal::pipeline::run_pipeline(
        &scenario.frames,
        &scenario.imu,
        scenario_cfg.mount.x,
        &WeightSource::Ransac,
        &cfg.pipeline,
    )?;
    let reference = Trajectory::from_ego(&scenario.ego);
    let mut rows = Vec::new();
    for &bias_deg in &cfg.rte_biases_deg {
        let mount = MountPose {
            yaw: radcal::geom::Angle::new(
                scenario_cfg.mount.yaw.radians() + bias_deg.to_radians(),
            ),
            ..scenario_cfg.mount
        };
        let recon = reconstruct_trajectory(&output.motions, &mount, &output.yaw_rates)?;
        let rte = relative_trajectory_error(&recon, &reference, cfg.rte_segment_m)?;
        rows.push((bias_deg, rte));
    }
    Ok(rows)
}

fn report(input: &Path) -> Result<(), CliError> {
    let report = read_report(input)?;
    println!(
        "radcal report v{}{}",
        report.version,
        report
            .seed
            .map(|s| format!(" (seed {s})"))
            .unwrap_or_default()
    );
    print_estimates(&report);
    if let Some(summary) = &report.summary {
        let pretty = serde_json::to_string_pretty(summary)
            .unwrap_or_else(|_| "<unprintable>".to_string());
        println!("summary:\n{pretty}");
    }
    Ok(())
}
