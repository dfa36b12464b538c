//! Global position estimation: drifting high-rate odometry fused with
//! low-rate absolute fixes by a position-plus-bias Kalman filter.

use nalgebra::{Matrix3, Matrix6, Rotation3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("position fix is flagged invalid")]
    InvalidFix,
    #[error("reading at {got} s precedes filter time {now} s")]
    NonMonotoneTime { now: f64, got: f64 },
    #[error("estimate and truth trajectories do not overlap in time")]
    EmptyOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdomReading {
    pub stamp: f64,
    /// Displacement since the previous reading, odometry frame.
    pub delta: Vec3,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub stamp: f64,
    pub position: Vec3,
    pub sigma: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub stamp: f64,
    pub position: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionParams {
    /// Odometry displacement noise per reading, m.
    pub sigma_odom: f64,
    /// Bias random walk, m/s per sqrt(s).
    pub bias_walk: f64,
    /// Prior standard deviation of the odometry bias, m/s.
    pub initial_bias_sigma: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self { sigma_odom: 0.01, bias_walk: 1e-4, initial_bias_sigma: 0.02 }
    }
}

/// State `[position, odometry bias]` with its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionFilter {
    pub stamp: f64,
    pub state: Vector6<f64>,
    pub covariance: Matrix6<f64>,
    pub heading: f64,
    pub params: FusionParams,
}

impl FusionFilter {
    /// Starts at the fix with zero bias; `heading` rotates odometry deltas
    /// into the world frame.
    pub fn init(fix: &GpsFix, heading: f64, params: FusionParams) -> Result<Self, EstimationError> {
        if !fix.valid {
            return Err(EstimationError::InvalidFix);
        }
        let mut state = Vector6::zeros();
        state.fixed_rows_mut::<3>(0).copy_from(&fix.position);
        let mut covariance = Matrix6::zeros();
        covariance.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * fix.sigma.powi(2)));
        covariance
            .fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(Matrix3::identity() * params.initial_bias_sigma.powi(2)));
        Ok(Self { stamp: fix.stamp, state, covariance, heading, params })
    }

    pub fn position(&self) -> Vec3 {
        self.state.fixed_rows::<3>(0).into_owned()
    }

    pub fn bias(&self) -> Vec3 {
        self.state.fixed_rows::<3>(3).into_owned()
    }

    pub fn position_covariance(&self) -> Matrix3<f64> {
        self.covariance.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn propagate(&mut self, odom: &OdomReading) -> Result<(), EstimationError> {
        if odom.stamp < self.stamp {
            return Err(EstimationError::NonMonotoneTime { now: self.stamp, got: odom.stamp });
        }
        let dt = odom.stamp - self.stamp;
        let delta = Rotation3::from_axis_angle(&Vec3::z_axis(), self.heading) * odom.delta;
        let p = self.position() + delta - self.bias() * dt;
        self.state.fixed_rows_mut::<3>(0).copy_from(&p);

        let mut f = Matrix6::identity();
        f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * -dt));
        let mut q = Matrix6::zeros();
        let sigma = if odom.sigma > 0.0 { odom.sigma } else { self.params.sigma_odom };
        q.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * sigma.powi(2)));
        q.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * (self.params.bias_walk.powi(2) * dt)));
        self.covariance = f * self.covariance * f.transpose() + q;
        self.stamp = odom.stamp;
        Ok(())
    }

    pub fn correct(&mut self, fix: &GpsFix) -> Result<(), EstimationError> {
        if !fix.valid {
            return Err(EstimationError::InvalidFix);
        }
        let r = Matrix3::identity() * fix.sigma.powi(2);
        let s = self.position_covariance() + r;
        let s_inv = s.try_inverse().expect("innovation covariance is positive definite");
        let pht = self.covariance.fixed_columns::<3>(0).into_owned();
        let k = pht * s_inv;
        let innovation = fix.position - self.position();
        self.state += k * innovation;

        let mut ikh = Matrix6::identity();
        let mut left = ikh.fixed_columns_mut::<3>(0);
        left -= &k;
        let p = ikh * self.covariance * ikh.transpose() + k * r * k.transpose();
        self.covariance = (p + p.transpose()) * 0.5;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorModel {
    pub odom_rate: f64,
    pub sigma_odom: f64,
    pub bias_walk: f64,
    pub initial_bias: [f64; 3],
    pub gps_rate: f64,
    pub sigma_gps: f64,
    /// Fixes report the position this many seconds before their stamp.
    pub latency: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            odom_rate: 100.0,
            sigma_odom: 0.01,
            bias_walk: 1e-4,
            initial_bias: [0.0; 3],
            gps_rate: 5.0,
            sigma_gps: 0.1,
            latency: 0.0,
        }
    }
}

impl SensorModel {
    pub fn fusion_params(&self) -> FusionParams {
        FusionParams { sigma_odom: self.sigma_odom, bias_walk: self.bias_walk, ..FusionParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorStreams {
    pub odom: Vec<OdomReading>,
    pub fixes: Vec<GpsFix>,
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vec3 {
    if sigma == 0.0 {
        return Vec3::zeros();
    }
    let mut g = || -> f64 { StandardNormal.sample(rng) };
    Vec3::new(g(), g(), g()) * sigma
}

/// Synthesizes odometry between consecutive truth samples and fixes at
/// `gps_rate`, skipping fixes whose stamp falls in a `[start, end)` dropout.
pub fn simulate_sensors(truth: &[TrajectorySample], model: &SensorModel, dropouts: &[(f64, f64)], seed: u64) -> SensorStreams {
    let mut odom_rng = ChaCha8Rng::seed_from_u64(seed);
    odom_rng.set_stream(1);
    let mut gps_rng = ChaCha8Rng::seed_from_u64(seed);
    gps_rng.set_stream(2);

    let mut out = SensorStreams::default();
    let Some(first) = truth.first() else {
        return out;
    };
    let mut bias = Vec3::from(model.initial_bias);
    for w in truth.windows(2) {
        let dt = w[1].stamp - w[0].stamp;
        let delta = w[1].position - w[0].position + bias * dt + gaussian3(&mut odom_rng, model.sigma_odom);
        out.odom.push(OdomReading { stamp: w[1].stamp, delta, sigma: model.sigma_odom });
        bias += gaussian3(&mut odom_rng, model.bias_walk * dt.sqrt());
    }

    let end = truth.last().map_or(first.stamp, |s| s.stamp);
    let period = 1.0 / model.gps_rate;
    let mut k = 0u64;
    loop {
        let stamp = first.stamp + k as f64 * period;
        if stamp > end + 1e-9 {
            break;
        }
        k += 1;
        if dropouts.iter().any(|&(a, b)| stamp >= a && stamp < b) {
            continue;
        }
        let measured_at = (stamp - model.latency).max(first.stamp);
        let position = interpolate(truth, measured_at).expect("stamp within truth span") + gaussian3(&mut gps_rng, model.sigma_gps);
        out.fixes.push(GpsFix { stamp, position, sigma: model.sigma_gps, valid: true });
    }
    out
}

/// Runs the filter over merged streams and returns the estimate at every
/// odometry stamp. The first fix initializes the filter.
pub fn fuse(streams: &SensorStreams, params: FusionParams, heading: f64) -> Result<Vec<TrajectorySample>, EstimationError> {
    let first = streams.fixes.first().ok_or(EstimationError::InvalidFix)?;
    let mut filter = FusionFilter::init(first, heading, params)?;
    let mut out = vec![TrajectorySample { stamp: filter.stamp, position: filter.position() }];
    let mut fixes = streams.fixes.iter().skip(1).peekable();
    let start = filter.stamp;
    for odom in streams.odom.iter().filter(|o| o.stamp > start) {
        filter.propagate(odom)?;
        while let Some(fix) = fixes.next_if(|f| f.stamp <= odom.stamp + 1e-9) {
            filter.correct(fix)?;
        }
        out.push(TrajectorySample { stamp: odom.stamp, position: filter.position() });
    }
    Ok(out)
}

/// Integrates odometry from `start` without any correction.
pub fn dead_reckon(start: &TrajectorySample, odom: &[OdomReading]) -> Vec<TrajectorySample> {
    let mut p = start.position;
    let mut out = vec![*start];
    for o in odom.iter().filter(|o| o.stamp > start.stamp) {
        p += o.delta;
        out.push(TrajectorySample { stamp: o.stamp, position: p });
    }
    out
}

/// Linear interpolation of a time-sorted trajectory; `None` outside its span.
pub fn interpolate(trajectory: &[TrajectorySample], t: f64) -> Option<Vec3> {
    let first = trajectory.first()?;
    let last = trajectory.last()?;
    if t < first.stamp - 1e-12 || t > last.stamp + 1e-12 {
        return None;
    }
    let i = trajectory.partition_point(|s| s.stamp <= t);
    if i == 0 {
        return Some(first.position);
    }
    if i == trajectory.len() {
        return Some(last.position);
    }
    let (a, b) = (&trajectory[i - 1], &trajectory[i]);
    let span = b.stamp - a.stamp;
    let w = if span > 0.0 { (t - a.stamp) / span } else { 0.0 };
    Some(a.position + (b.position - a.position) * w)
}

pub const ALIGN_MAX_OFFSET: f64 = 1.0;
pub const ALIGN_OFFSET_STEP: f64 = 0.01;

/// 3D RMSE after removing the best time offset (grid over +-1 s in 10 ms
/// steps) and, per offset, the least-squares horizontal translation.
pub fn rmse_aligned(estimate: &[TrajectorySample], truth: &[TrajectorySample]) -> Result<f64, EstimationError> {
    let steps = (ALIGN_MAX_OFFSET / ALIGN_OFFSET_STEP).round() as i64;
    let mut best: Option<f64> = None;
    let mut residuals: Vec<Vec3> = Vec::with_capacity(estimate.len());
    for k in -steps..=steps {
        let offset = k as f64 * ALIGN_OFFSET_STEP;
        residuals.clear();
        residuals.extend(
            estimate
                .iter()
                .filter_map(|s| interpolate(truth, s.stamp + offset).map(|t| s.position - t)),
        );
        if residuals.is_empty() {
            continue;
        }
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<Vec3>() / n;
        let shift = Vec3::new(mean.x, mean.y, 0.0);
        let mse = residuals.iter().map(|r| (r - shift).norm_squared()).sum::<f64>() / n;
        let rmse = mse.sqrt();
        if best.is_none_or(|b| rmse < b) {
            best = Some(rmse);
        }
    }
    best.ok_or(EstimationError::EmptyOverlap)
}

/// Unaligned 3D RMSE against truth interpolated at the estimate stamps.
pub fn rmse(estimate: &[TrajectorySample], truth: &[TrajectorySample]) -> Result<f64, EstimationError> {
    let errs: Vec<f64> = estimate
        .iter()
        .filter_map(|s| interpolate(truth, s.stamp).map(|t| (s.position - t).norm_squared()))
        .collect();
    if errs.is_empty() {
        return Err(EstimationError::EmptyOverlap);
    }
    Ok((errs.iter().sum::<f64>() / errs.len() as f64).sqrt())
}

/// Closed square loop of perimeter `4 * side` flown at constant `speed`.
pub fn square_trajectory(side: f64, speed: f64, altitude: f64, rate: f64) -> Vec<TrajectorySample> {
    let duration = 4.0 * side / speed;
    let n = (duration * rate).round() as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 / rate;
            let s = (t * speed).min(4.0 * side);
            let leg = ((s / side) as usize).min(3);
            let u = s - leg as f64 * side;
            let (x, y) = match leg {
                0 => (u, 0.0),
                1 => (side, u),
                2 => (side - u, side),
                _ => (0.0, side - u),
            };
            TrajectorySample { stamp: t, position: Vec3::new(x, y, altitude) }
        })
        .collect()
}

pub fn trajectory_csv(samples: &[TrajectorySample]) -> String {
    let mut s = String::from("stamp,x,y,z\n");
    for p in samples {
        s.push_str(&format!("{:.6},{:.6},{:.6},{:.6}\n", p.stamp, p.position.x, p.position.y, p.position.z));
    }
    s
}
