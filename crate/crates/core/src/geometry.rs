//! Frames, pinhole projection and single-view inverse projection of a
//! known-length segment lying on a horizontal plane.
//!
//! Conventions: the camera frame `C` has `z` along the optical axis, `x` to the
//! right of the image and `y` down the image. A [`Pose`] maps camera-frame
//! points into the world frame `W` (`p_W = R_WC p_C + t`).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Denominator threshold below which the two-ray system is treated as singular.
pub const DEGENERACY_EPS: f64 = 1e-12;

/// Minimum depth accepted by [`project_point`].
pub const MIN_DEPTH: f64 = 1e-9;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point has non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("recovered point lies behind the camera")]
    BehindCamera,
    #[error("matrix is not a proper rotation (orthonormality error {0:e})")]
    NotARotation(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub x: f64,
    pub y: f64,
}

impl Pixel {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// A proper rotation matrix. Orthonormality is checked once, at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let err = (m * m.transpose() - Matrix3::identity()).abs().max();
        let det_err = (m.determinant() - 1.0).abs();
        let worst = err.max(det_err);
        if !worst.is_finite() || worst > ORTHONORMAL_TOL {
            return Err(GeometryError::NotARotation(worst));
        }
        Ok(Self(m))
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self(*rot.matrix())
    }

    /// Roll (about x), pitch (about y), yaw (about z), applied as `Rz * Ry * Rx`.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self(*nalgebra::Rotation3::from_euler_angles(roll, pitch, yaw).matrix())
    }

    /// Orientation of a camera looking straight down with image `x` along
    /// world `x` and image `y` along world `-y`.
    pub fn nadir() -> Self {
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }
}

/// Rigid transform taking camera-frame points into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn inverse(&self) -> Pose {
        let r_inv = self.rotation.inverse();
        Pose::new(r_inv, -r_inv.rotate(&self.translation))
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation.compose(&other.rotation),
            self.rotation.rotate(&other.translation) + self.translation,
        )
    }

    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub px: f64,
    pub py: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, px: f64, py: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, px, py, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Principal point at the image center, square pixels.
    pub fn centered(f: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(self.px > 0.0 && self.px < self.width as f64) {
            return Err(GeometryError::InvalidIntrinsics("principal point x outside image"));
        }
        if !(self.py > 0.0 && self.py < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics("principal point y outside image"));
        }
        Ok(())
    }

    /// Smaller of the horizontal and vertical full fields of view, radians.
    pub fn min_fov(&self) -> f64 {
        let h = 2.0 * (self.width as f64 / (2.0 * self.fx)).atan();
        let v = 2.0 * (self.height as f64 / (2.0 * self.fy)).atan();
        h.min(v)
    }

    pub fn contains(&self, u: &Pixel) -> bool {
        u.x >= 0.0 && u.y >= 0.0 && u.x <= self.width as f64 && u.y <= self.height as f64
    }
}

/// Image point to viewing ray with unit `z` component.
pub fn normalize_pixel(u: &Pixel, k: &CameraIntrinsics) -> Vec3 {
    Vec3::new((u.x - k.px) / k.fx, (u.y - k.py) / k.fy, 1.0)
}

pub fn project_point(p_c: &Vec3, k: &CameraIntrinsics) -> Result<Pixel, GeometryError> {
    if !(p_c.z > MIN_DEPTH) {
        return Err(GeometryError::NonPositiveDepth(p_c.z));
    }
    Ok(Pixel::new(k.fx * p_c.x / p_c.z + k.px, k.fy * p_c.y / p_c.z + k.py))
}

/// Recovers the camera-frame positions of two image points known to be `length`
/// apart on a plane whose normal is world `z`.
///
/// `r_cw` rotates world-frame vectors into the camera frame, so the plane
/// normal seen from the camera is `r_cw * (0, 0, 1)`. Each point is written as
/// `lambda_i * length * u_in`; both scale factors come out of the distance and
/// perpendicularity constraints in closed form.
pub fn inverse_project_pair(
    u1: &Pixel,
    u2: &Pixel,
    r_cw: &Rotation,
    length: f64,
    k: &CameraIntrinsics,
) -> Result<(Vec3, Vec3), GeometryError> {
    if !(length > 0.0) {
        return Err(GeometryError::DegenerateGeometry("segment length must be positive"));
    }
    let normal = r_cw.rotate(&Vec3::z());
    let ray1 = normalize_pixel(u1, k);
    let ray2 = normalize_pixel(u2, k);
    let (lambda1, lambda2) = ray_scales(&ray1, &ray2, &normal)?;
    Ok((ray1 * (lambda1 * length), ray2 * (lambda2 * length)))
}

/// Scale factors `(lambda1, lambda2)` for a pair of rays and a plane normal.
pub fn ray_scales(ray1: &Vec3, ray2: &Vec3, normal: &Vec3) -> Result<(f64, f64), GeometryError> {
    let n1 = normal.dot(ray1);
    let n2 = normal.dot(ray2);
    let denom = (ray1 * n2 - ray2 * n1).norm();
    if !(denom >= DEGENERACY_EPS) {
        return Err(GeometryError::DegenerateGeometry("rays are collinear"));
    }
    if n1.abs() < DEGENERACY_EPS || n2.abs() < DEGENERACY_EPS {
        return Err(GeometryError::DegenerateGeometry("viewing ray parallel to object plane"));
    }
    // Opposite signs would put one point behind the focal plane.
    if n1.signum() != n2.signum() {
        return Err(GeometryError::BehindCamera);
    }
    Ok((n2.abs() / denom, n1.abs() / denom))
}

pub fn object_center(p1: &Vec3, p2: &Vec3) -> Vec3 {
    (p1 + p2) * 0.5
}

pub fn camera_to_world(p_c: &Vec3, pose_wc: &Pose) -> Vec3 {
    pose_wc.transform(p_c)
}

pub fn world_to_camera(p_w: &Vec3, pose_wc: &Pose) -> Vec3 {
    pose_wc.rotation.inverse().rotate(&(p_w - pose_wc.translation))
}
