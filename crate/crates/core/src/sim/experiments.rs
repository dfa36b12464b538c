//! Offline experiments: fused-estimate accuracy and the detection-error map.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, DetectionMapConfig, FusionEvalConfig};
use super::{stream_rng, write_json, SimError};
use crate::estimation::{
    dead_reckon, fuse, rmse, rmse_aligned, simulate_sensors, square_trajectory, trajectory_csv, TrajectorySample,
};
use crate::geometry::{normalize_pixel, Pixel, Pose, Rotation, Vec3};
use crate::vision::{detect_objects, render_scene, ColorClass, RenderParams, SceneDisc};

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSeedResult {
    pub seed: u64,
    pub fused_rmse: f64,
    pub odometry_rmse: f64,
    pub gps_rmse: f64,
    pub odometry_end_error: f64,
    /// Unaligned RMSE over the 20 s before the outage.
    pub pre_dropout_rmse: f64,
    /// Unaligned RMS error inside the outage window.
    pub dropout_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub scenario: String,
    pub trajectory_length: f64,
    pub seeds: Vec<FusionSeedResult>,
    pub median_fused_rmse: f64,
    pub median_odometry_rmse: f64,
    pub median_gps_rmse: f64,
    pub median_odometry_end_error: f64,
    pub median_dropout_ratio: f64,
}

fn window(traj: &[TrajectorySample], a: f64, b: f64) -> Vec<TrajectorySample> {
    traj.iter().filter(|s| s.stamp >= a && s.stamp < b).copied().collect()
}

fn runtime(e: impl std::fmt::Display) -> SimError {
    SimError::Io(std::io::Error::other(e.to_string()))
}

fn seed_trajectories(c: &FusionEvalConfig, seed: u64) -> Result<[Vec<TrajectorySample>; 4], SimError> {
    let truth = square_trajectory(c.side, c.speed, c.altitude, c.model.odom_rate);
    let streams = simulate_sensors(&truth, &c.model, &[], seed);
    let fused = fuse(&streams, c.model.fusion_params(), 0.0).map_err(runtime)?;
    let first = streams.fixes.first().ok_or_else(|| ConfigError::field("model.gps_rate", "no fixes generated"))?;
    let odometry = dead_reckon(&TrajectorySample { stamp: first.stamp, position: first.position }, &streams.odom);
    let gps = streams.fixes.iter().map(|f| TrajectorySample { stamp: f.stamp, position: f.position }).collect();
    Ok([truth, fused, odometry, gps])
}

/// Fused, odometry-only and fix-only accuracy on a closed square loop for
/// `seeds` consecutive seeds, plus a fix outage replay per seed.
pub fn fusion_eval(c: &FusionEvalConfig) -> Result<FusionReport, SimError> {
    c.validate()?;
    let mut seeds = Vec::new();
    for i in 0..c.seeds as u64 {
        let seed = c.seed + i;
        let [truth, fused, odometry, gps] = seed_trajectories(c, seed)?;
        let fused_rmse = rmse_aligned(&fused, &truth).map_err(runtime)?;
        let odometry_rmse = rmse_aligned(&odometry, &truth).map_err(runtime)?;
        let gps_rmse = rmse_aligned(&gps, &truth).map_err(runtime)?;
        let end = odometry.last().expect("non-empty").position - truth.last().expect("non-empty").position;

        let [d0, d1] = c.dropout;
        let streams = simulate_sensors(&truth, &c.model, &[(d0, d1)], seed);
        let outage = fuse(&streams, c.model.fusion_params(), 0.0).map_err(runtime)?;
        let pre = rmse(&window(&outage, (d0 - 20.0).max(0.0), d0), &truth).unwrap_or(f64::NAN);
        let during = rmse(&window(&outage, d0, d1), &truth).unwrap_or(f64::NAN);
        seeds.push(FusionSeedResult {
            seed,
            fused_rmse,
            odometry_rmse,
            gps_rmse,
            odometry_end_error: end.norm(),
            pre_dropout_rmse: pre,
            dropout_rms: during,
        });
    }
    let pick = |f: fn(&FusionSeedResult) -> f64| median(&seeds.iter().map(f).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    Ok(FusionReport {
        scenario: c.name.clone(),
        trajectory_length: 4.0 * c.side,
        median_fused_rmse: pick(|s| s.fused_rmse),
        median_odometry_rmse: pick(|s| s.odometry_rmse),
        median_gps_rmse: pick(|s| s.gps_rmse),
        median_odometry_end_error: pick(|s| s.odometry_end_error),
        median_dropout_ratio: pick(|s| s.dropout_rms / s.pre_dropout_rmse),
        seeds,
    })
}

pub fn write_fusion_outputs(c: &FusionEvalConfig, report: &FusionReport, out: &Path) -> Result<(), SimError> {
    let mut table = String::from("seed,fused_rmse,odometry_rmse,gps_rmse,odometry_end_error,pre_dropout_rmse,dropout_rms\n");
    for s in &report.seeds {
        table.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            s.seed, s.fused_rmse, s.odometry_rmse, s.gps_rmse, s.odometry_end_error, s.pre_dropout_rmse, s.dropout_rms
        ));
    }
    std::fs::write(out.join("fusion.csv"), table)?;
    let [truth, fused, odometry, gps] = seed_trajectories(c, c.seed)?;
    for (name, traj) in [("truth.csv", &truth), ("fused.csv", &fused), ("odometry.csv", &odometry), ("gps.csv", &gps)] {
        std::fs::write(out.join(name), trajectory_csv(traj))?;
    }
    write_json(&out.join("metrics.json"), report)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub altitude: f64,
    pub col: u32,
    pub row: u32,
    /// Image position the object center projects to.
    pub pixel: [f64; 2],
    /// Median 3D error over the renders that produced a detection.
    pub error: Option<f64>,
    pub hits: u32,
    pub border: bool,
    pub center: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMapReport {
    pub scenario: String,
    pub cells: Vec<MapCell>,
    /// Error of a clean on-axis render, per altitude.
    pub clean_center_errors: Vec<f64>,
    pub median_center_error: f64,
    pub median_border_error: f64,
    pub blank_cells: usize,
    pub blank_border_cells: usize,
}

/// Ground point seen at pixel `u` from a nadir camera at `altitude`.
fn ground_point(u: &Pixel, pose: &Pose, c: &DetectionMapConfig) -> Vec3 {
    let ray = pose.rotation.rotate(&normalize_pixel(u, &c.camera));
    pose.translation + ray * (-pose.translation.z / ray.z)
}

fn locate(c: &DetectionMapConfig, pose: &Pose, truth: &Vec3, render: &RenderParams, seed: u64, stream: u64) -> Option<f64> {
    let disc = SceneDisc { center: *truth, diameter: c.object_diameter, rgb: c.rgb };
    let mut rng = stream_rng(seed, stream);
    let img = render_scene(&[disc], pose, &c.camera, render, &mut rng);
    let (dets, _) = detect_objects(&img, pose, &c.camera, &[ColorClass::red()], c.object_diameter, 0.0, &c.detector);
    dets.iter().map(|d| (d.position - truth).norm()).min_by(f64::total_cmp)
}

/// Sweeps the object over a grid of image positions at each altitude and
/// records the 3D localization error, leaving cells without detections blank.
pub fn detection_map(c: &DetectionMapConfig) -> Result<DetectionMapReport, SimError> {
    c.validate()?;
    let [gx, gy] = c.grid;
    let (cx, cy) = ((gx - 1) as f64 / 2.0, (gy - 1) as f64 / 2.0);
    let mut cells = Vec::new();
    let mut clean_center_errors = Vec::new();
    let mut stream = 0u64;
    for &altitude in &c.altitudes {
        let pose = Pose::new(Rotation::nadir(), Vec3::new(0.0, 0.0, altitude));
        let on_axis = ground_point(&Pixel::new(c.camera.px, c.camera.py), &pose, c);
        let clean = locate(c, &pose, &on_axis, &RenderParams { vignetting: 0.0, noise_sigma: 0.0, ..c.render }, c.seed, stream);
        stream += 1;
        clean_center_errors.push(clean.unwrap_or(f64::INFINITY));
        for row in 0..gy {
            for col in 0..gx {
                let u = Pixel::new(
                    (col as f64 + 0.5) / gx as f64 * c.camera.width as f64,
                    (row as f64 + 0.5) / gy as f64 * c.camera.height as f64,
                );
                let truth = ground_point(&u, &pose, c);
                let errors: Vec<f64> = (0..c.repeats)
                    .filter_map(|_| {
                        stream += 1;
                        locate(c, &pose, &truth, &c.render, c.seed, stream)
                    })
                    .collect();
                cells.push(MapCell {
                    altitude,
                    col,
                    row,
                    pixel: [u.x, u.y],
                    error: median(&errors),
                    hits: errors.len() as u32,
                    border: col == 0 || row == 0 || col == gx - 1 || row == gy - 1,
                    center: (col as f64 - cx).abs() <= 1.0 && (row as f64 - cy).abs() <= 1.0,
                });
            }
        }
    }
    let collect = |f: fn(&MapCell) -> bool| cells.iter().filter(|c| f(c)).filter_map(|c| c.error).collect::<Vec<_>>();
    Ok(DetectionMapReport {
        scenario: c.name.clone(),
        median_center_error: median(&collect(|c| c.center)).unwrap_or(f64::NAN),
        median_border_error: median(&collect(|c| c.border)).unwrap_or(f64::NAN),
        blank_cells: cells.iter().filter(|c| c.error.is_none()).count(),
        blank_border_cells: cells.iter().filter(|c| c.border && c.error.is_none()).count(),
        clean_center_errors,
        cells,
    })
}

pub fn detection_map_csv(report: &DetectionMapReport) -> String {
    let mut s = String::from("altitude,col,row,u,v,error,hits\n");
    for c in &report.cells {
        let err = c.error.map(|e| format!("{e:.6}")).unwrap_or_default();
        s.push_str(&format!("{:.3},{},{},{:.3},{:.3},{},{}\n", c.altitude, c.col, c.row, c.pixel[0], c.pixel[1], err, c.hits));
    }
    s
}
