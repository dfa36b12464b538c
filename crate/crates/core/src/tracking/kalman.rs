//! Constant-velocity filter over `(x, y, z, vx, vy)`; `z` is a random walk.

use nalgebra::{Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::vision::{ColorId, Detection};

pub type State5 = SVector<f64, 5>;
pub type Cov5 = SMatrix<f64, 5, 5>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KfParams {
    /// White-acceleration spectral density, m^2/s^3.
    pub q: f64,
    /// Position measurement standard deviation, m.
    pub sigma_m: f64,
    /// Association gate, m.
    pub gate: f64,
    pub max_misses: u32,
    pub min_hits_confirm: u32,
    /// Prior velocity standard deviation for new tracks, m/s.
    pub init_velocity_sigma: f64,
}

impl Default for KfParams {
    fn default() -> Self {
        Self { q: 0.05, sigma_m: 0.15, gate: 2.0, max_misses: 10, min_hits_confirm: 3, init_velocity_sigma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub state: State5,
    pub covariance: Cov5,
    pub color: ColorId,
    pub hits: u32,
    pub misses: u32,
    pub last_update: f64,
    pub confirmed: bool,
}

impl Track {
    pub fn from_detection(id: u64, det: &Detection, params: &KfParams) -> Self {
        let p = det.position;
        let sm2 = params.sigma_m * params.sigma_m;
        let sv2 = params.init_velocity_sigma * params.init_velocity_sigma;
        Self {
            id,
            state: State5::new(p.x, p.y, p.z, 0.0, 0.0),
            covariance: Cov5::from_diagonal(&State5::new(sm2, sm2, sm2, sv2, sv2)),
            color: det.color,
            hits: 1,
            misses: 0,
            last_update: det.timestamp,
            confirmed: params.min_hits_confirm <= 1,
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.state[0], self.state[1], self.state[2])
    }

    /// Horizontal velocity as a 3-vector with zero `z`.
    pub fn velocity(&self) -> Vec3 {
        Vec3::new(self.state[3], self.state[4], 0.0)
    }
}

pub fn kf_predict(track: &Track, dt: f64, params: &KfParams) -> Track {
    let dt = dt.max(0.0);
    let mut f = Cov5::identity();
    f[(0, 3)] = dt;
    f[(1, 4)] = dt;
    let q = params.q;
    let mut qm = Cov5::zeros();
    for (p, v) in [(0, 3), (1, 4)] {
        qm[(p, p)] = q * dt.powi(3) / 3.0;
        qm[(p, v)] = q * dt.powi(2) / 2.0;
        qm[(v, p)] = q * dt.powi(2) / 2.0;
        qm[(v, v)] = q * dt;
    }
    qm[(2, 2)] = q * dt;
    let mut out = track.clone();
    out.state = f * track.state;
    out.covariance = symmetrize(f * track.covariance * f.transpose() + qm);
    out
}

/// Position-only measurement update (Joseph form).
pub fn kf_update(track: &Track, det: &Detection, params: &KfParams) -> Track {
    let h = SMatrix::<f64, 3, 5>::from_fn(|r, c| if r == c { 1.0 } else { 0.0 });
    let r = Matrix3::identity() * (params.sigma_m * params.sigma_m);
    let p = &track.covariance;
    let s = h * p * h.transpose() + r;
    let s_inv = invert_spd(&s);
    let k = p * h.transpose() * s_inv;
    let innovation = det.position - h * track.state;
    let ikh = Cov5::identity() - k * h;
    let mut out = track.clone();
    out.state = track.state + k * innovation;
    out.covariance = symmetrize(ikh * p * ikh.transpose() + k * r * k.transpose());
    out.hits += 1;
    out.misses = 0;
    out.last_update = det.timestamp;
    out.confirmed |= out.hits >= params.min_hits_confirm;
    out
}

fn invert_spd(s: &Matrix3<f64>) -> Matrix3<f64> {
    if let Some(inv) = s.try_inverse() {
        return inv;
    }
    // Zero measurement noise on a collapsed prior.
    let scale = s.diagonal().amax().max(1.0);
    (s + Matrix3::identity() * (1e-12 * scale)).try_inverse().unwrap_or_else(Matrix3::zeros)
}

fn symmetrize<const N: usize>(m: SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, z: f64, t: f64) -> Detection {
        Detection { timestamp: t, position: Vec3::new(x, y, z), color: ColorId(0), blob_area: 100 }
    }

    fn track_with(state: State5, params: &KfParams) -> Track {
        let mut t = Track::from_detection(1, &det(0.0, 0.0, 0.0, 0.0), params);
        t.state = state;
        t
    }

    #[test]
    fn zero_dt_is_identity() {
        let p = KfParams::default();
        let t = track_with(State5::new(1.0, 2.0, 0.5, 0.3, -0.1), &p);
        assert_eq!(kf_predict(&t, 0.0, &p), t);
    }

    #[test]
    fn linear_motion() {
        let p = KfParams::default();
        let t = track_with(State5::new(0.0, 0.0, 1.0, 1.0, 0.0), &p);
        let n = kf_predict(&t, 2.0, &p);
        assert!((n.position() - Vec3::new(2.0, 0.0, 1.0)).norm() < 1e-12);
        assert_eq!(n.velocity(), t.velocity());
    }

    #[test]
    fn predict_grows_trace() {
        let p = KfParams::default();
        let t = track_with(State5::new(0.0, 0.0, 0.0, 0.5, 0.5), &p);
        let mut prev = t.covariance.trace();
        let mut cur = t;
        for _ in 0..5 {
            cur = kf_predict(&cur, 0.1, &p);
            assert!(cur.covariance.trace() > prev);
            prev = cur.covariance.trace();
        }
    }

    #[test]
    fn uninformative_measurement() {
        let t = track_with(State5::new(1.0, 1.0, 0.0, 0.2, 0.0), &KfParams::default());
        let p = KfParams { sigma_m: 1e9, ..Default::default() };
        let u = kf_update(&t, &det(50.0, -20.0, 3.0, 1.0), &p);
        assert!((u.state - t.state).amax() < 1e-6);
    }

    #[test]
    fn update_contracts_position_block() {
        let p = KfParams::default();
        let t = kf_predict(&track_with(State5::new(0.0, 0.0, 0.0, 0.1, 0.1), &p), 0.5, &p);
        let u = kf_update(&t, &det(0.1, 0.0, 0.0, 0.5), &p);
        let diff = t.covariance.fixed_view::<3, 3>(0, 0) - u.covariance.fixed_view::<3, 3>(0, 0);
        let eig = diff.symmetric_eigen().eigenvalues;
        assert!(eig.min() >= -1e-12, "{eig:?}");
        assert_eq!(u.hits, t.hits + 1);
        assert_eq!(u.misses, 0);
    }

    #[test]
    fn noise_free_velocity_matches_least_squares() {
        // Least-squares slope through (0, 0), (1, 1), (2, 2) is exactly 1 m/s.
        let times = [0.0, 1.0, 2.0];
        let xs = [0.0, 1.0, 2.0];
        let tm = times.iter().sum::<f64>() / 3.0;
        let xm = xs.iter().sum::<f64>() / 3.0;
        let slope = times.iter().zip(xs).map(|(t, x)| (t - tm) * (x - xm)).sum::<f64>()
            / times.iter().map(|t| (t - tm).powi(2)).sum::<f64>();
        let p = KfParams { sigma_m: 1e-6, init_velocity_sigma: 1e3, ..Default::default() };
        let mut t = Track::from_detection(0, &det(0.0, 0.0, 0.0, 0.0), &p);
        for k in 1..3 {
            t = kf_predict(&t, 1.0, &p);
            t = kf_update(&t, &det(xs[k], 0.0, 0.0, times[k]), &p);
        }
        assert!((t.state[3] - slope).abs() < 1e-3, "{}", t.state[3]);
        assert!(t.confirmed);
    }
}
