//! Synthetic nadir-camera renderer: colored discs on a flat ground plane.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_pixel, project_point, world_to_camera, CameraIntrinsics, Pixel, Pose, Vec3};

use super::image::Image;

/// A flat horizontal disc in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneDisc {
    pub center: Vec3,
    pub diameter: f64,
    pub rgb: [u8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderParams {
    pub background: [u8; 3],
    /// Radial gain `1 - v (r / r_max)^2`.
    pub vignetting: f64,
    /// Per-channel Gaussian noise standard deviation, 8-bit levels.
    pub noise_sigma: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self { background: [70, 120, 50], vignetting: 0.0, noise_sigma: 0.0 }
    }
}

/// Subsamples per pixel axis; edge pixels blend disc and background by coverage.
const SUPERSAMPLE: u32 = 4;

/// Rasterizes `discs` (later entries drawn on top) by casting a grid of rays
/// through every pixel. Noise draws come from `rng` in raster order, so equal
/// seeds give byte-identical images.
pub fn render_scene<R: Rng + ?Sized>(
    discs: &[SceneDisc],
    pose_wc: &Pose,
    k: &CameraIntrinsics,
    params: &RenderParams,
    rng: &mut R,
) -> Image {
    let (w, h) = (k.width, k.height);
    let mut img = Image::filled(w, h, params.background);
    for disc in discs {
        let Some((x0, y0, x1, y1)) = pixel_bounds(disc, pose_wc, k) else {
            continue;
        };
        let radius2 = (disc.diameter / 2.0).powi(2);
        let inside = |u: f64, v: f64| {
            let ray_w = pose_wc.rotation.rotate(&normalize_pixel(&Pixel::new(u, v), k));
            if ray_w.z.abs() < 1e-12 {
                return false;
            }
            let s = (disc.center.z - pose_wc.translation.z) / ray_w.z;
            if s <= 0.0 {
                return false;
            }
            let hit = pose_wc.translation + ray_w * s;
            let (dx, dy) = (hit.x - disc.center.x, hit.y - disc.center.y);
            dx * dx + dy * dy <= radius2
        };
        for y in y0..y1 {
            for x in x0..x1 {
                let mut hits = 0;
                for j in 0..SUPERSAMPLE {
                    for i in 0..SUPERSAMPLE {
                        let step = 1.0 / SUPERSAMPLE as f64;
                        hits += inside(x as f64 + (i as f64 + 0.5) * step, y as f64 + (j as f64 + 0.5) * step) as u32;
                    }
                }
                if hits == 0 {
                    continue;
                }
                let cover = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
                let old = img.get(x, y);
                let mix = |c: usize| (old[c] as f64 * (1.0 - cover) + disc.rgb[c] as f64 * cover).round() as u8;
                img.put(x, y, [mix(0), mix(1), mix(2)]);
            }
        }
    }
    if params.vignetting != 0.0 || params.noise_sigma > 0.0 {
        apply_photometric(&mut img, k, params, rng);
    }
    img
}

/// Pixel rectangle `[x0, x1) x [y0, y1)` enclosing the disc's projection,
/// or `None` when the disc is fully outside the image.
fn pixel_bounds(disc: &SceneDisc, pose_wc: &Pose, k: &CameraIntrinsics) -> Option<(u32, u32, u32, u32)> {
    let r = disc.diameter / 2.0;
    let full = Some((0, 0, k.width, k.height));
    let (mut xmin, mut ymin, mut xmax, mut ymax) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    const RIM: usize = 48;
    for i in 0..RIM {
        let a = i as f64 * std::f64::consts::TAU / RIM as f64;
        // Slightly enlarged rim so the polygon encloses the true ellipse.
        let p_w = disc.center + Vec3::new(a.cos(), a.sin(), 0.0) * (r * 1.01 + 1e-3);
        match project_point(&world_to_camera(&p_w, pose_wc), k) {
            Ok(u) => {
                xmin = xmin.min(u.x);
                ymin = ymin.min(u.y);
                xmax = xmax.max(u.x);
                ymax = ymax.max(u.y);
            }
            // Part of the rim is behind the camera; fall back to a full scan.
            Err(_) => return full,
        }
    }
    let x0 = (xmin.floor() - 1.0).max(0.0);
    let y0 = (ymin.floor() - 1.0).max(0.0);
    let x1 = (xmax.ceil() + 1.0).min(k.width as f64);
    let y1 = (ymax.ceil() + 1.0).min(k.height as f64);
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    Some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
}

fn apply_photometric<R: Rng + ?Sized>(img: &mut Image, k: &CameraIntrinsics, params: &RenderParams, rng: &mut R) {
    let (w, h) = (img.width(), img.height());
    let corners = [(0.0, 0.0), (w as f64, 0.0), (0.0, h as f64), (w as f64, h as f64)];
    let r_max2 = corners
        .iter()
        .map(|(x, y)| (x - k.px).powi(2) + (y - k.py).powi(2))
        .fold(0.0f64, f64::max);
    let noise = (params.noise_sigma > 0.0).then(|| Normal::new(0.0, params.noise_sigma).expect("finite sigma"));
    let data = img.data_mut();
    for y in 0..h {
        for x in 0..w {
            let r2 = (x as f64 + 0.5 - k.px).powi(2) + (y as f64 + 0.5 - k.py).powi(2);
            let gain = 1.0 - params.vignetting * r2 / r_max2;
            let i = 3 * (y as usize * w as usize + x as usize);
            for c in 0..3 {
                let mut v = data[i + c] as f64 * gain;
                if let Some(n) = &noise {
                    v += n.sample(rng);
                }
                data[i + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
}
