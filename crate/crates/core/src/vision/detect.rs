//! Blob-to-world detection pipeline.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{camera_to_world, inverse_project_pair, object_center, CameraIntrinsics, Pixel, Pose, Vec3};

use super::blobs::{extract_blobs, Blob};
use super::color::{ColorClass, ColorId};
use super::image::{threshold, Image, Mask};

/// A single-frame world-frame object observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub timestamp: f64,
    pub position: Vec3,
    pub color: ColorId,
    pub blob_area: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorParams {
    pub min_area: usize,
    /// Minimum circularity for a blob to count as a disc.
    pub min_circularity: f64,
    /// Accepted blob area is within `[1/s, s]` times the area expected at the
    /// current altitude.
    pub size_tolerance: f64,
    /// Drop blobs whose bounding box touches the image border.
    pub reject_border: bool,
    /// Refine the major axis with coverage-weighted moments of the blob rim.
    pub subpixel: bool,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self { min_area: 20, min_circularity: 0.6, size_tolerance: 3.0, reject_border: true, subpixel: true }
    }
}

/// Per-frame counters for blobs that did not become detections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DetectionDiagnostics {
    pub blobs: usize,
    pub outliers: usize,
    pub border: usize,
    pub geometry_failures: usize,
}

/// Pixel area a disc of `diameter` should cover when seen from `altitude`.
pub fn expected_blob_area(k: &CameraIntrinsics, diameter: f64, altitude: f64) -> f64 {
    let d_px = k.fx * diameter / altitude;
    PI * d_px * d_px / 4.0
}

/// Drops blobs that are not round enough or whose size does not fit the altitude.
pub fn filter_outliers(
    blobs: &[Blob],
    altitude: f64,
    k: &CameraIntrinsics,
    object_diameter: f64,
    params: &DetectorParams,
) -> Vec<Blob> {
    let expected = expected_blob_area(k, object_diameter, altitude);
    let s = params.size_tolerance.max(1.0);
    blobs
        .iter()
        .filter(|b| {
            let a = b.area as f64;
            b.circularity >= params.min_circularity && a >= expected / s && a <= expected * s
        })
        .cloned()
        .collect()
}

/// Thresholds, extracts, filters and back-projects every class in `classes`.
/// Blobs for which the inverse projection fails are skipped and counted.
pub fn detect_objects(
    img: &Image,
    pose_wc: &Pose,
    k: &CameraIntrinsics,
    classes: &[ColorClass],
    object_diameter: f64,
    t: f64,
    params: &DetectorParams,
) -> (Vec<Detection>, DetectionDiagnostics) {
    let mut diag = DetectionDiagnostics::default();
    let mut out = Vec::new();
    let altitude = pose_wc.translation.z;
    if altitude <= 0.0 {
        return (out, diag);
    }
    let r_cw = pose_wc.rotation.inverse();
    for (ci, mask) in threshold(img, classes).iter().enumerate() {
        let color = ColorId(ci as u16);
        let blobs = extract_blobs(mask, params.min_area, color);
        diag.blobs += blobs.len();
        let kept = filter_outliers(&blobs, altitude, k, object_diameter, params);
        diag.outliers += blobs.len() - kept.len();
        for blob in kept {
            if params.reject_border && blob.touches_border(img.width(), img.height()) {
                diag.border += 1;
                continue;
            }
            let (u1, u2) = if params.subpixel { subpixel_axis(img, mask, &blob).unwrap_or(blob.major_axis) } else { blob.major_axis };
            match inverse_project_pair(&u1, &u2, &r_cw, object_diameter, k) {
                Ok((p1, p2)) => out.push(Detection {
                    timestamp: t,
                    position: camera_to_world(&object_center(&p1, &p2), pose_wc),
                    color,
                    blob_area: blob.area,
                }),
                Err(_) => diag.geometry_failures += 1,
            }
        }
    }
    (out, diag)
}

/// Major axis from moments where each pixel near the blob edge is weighted by
/// its estimated coverage, interpolating its color between the blob interior
/// and the surrounding background.
fn subpixel_axis(img: &Image, mask: &Mask, blob: &Blob) -> Option<(Pixel, Pixel)> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let set = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && mask.get(x as u32, y as u32);
    let near = |x: i64, y: i64, r: i64| (-r..=r).any(|dy| (-r..=r).any(|dx| set(x + dx, y + dy)));
    let (x0, y0) = (blob.bbox.0 as i64 - 3, blob.bbox.1 as i64 - 3);
    let (x1, y1) = (blob.bbox.2 as i64 + 3, blob.bbox.3 as i64 + 3);
    if x0 < 0 || y0 < 0 || x1 >= w || y1 >= h {
        return None;
    }

    let rgb = |x: i64, y: i64| img.get(x as u32, y as u32).map(f64::from);
    let mean = |acc: &mut ([f64; 3], f64), c: [f64; 3]| {
        (0..3).for_each(|i| acc.0[i] += c[i]);
        acc.1 += 1.0;
    };
    let (mut fg, mut bg) = (([0.0; 3], 0.0), ([0.0; 3], 0.0));
    for y in y0..=y1 {
        for x in x0..=x1 {
            if set(x, y) && !(-1..=1).any(|dy| (-1..=1).any(|dx| !set(x + dx, y + dy))) {
                mean(&mut fg, rgb(x, y));
            } else if !near(x, y, 2) {
                mean(&mut bg, rgb(x, y));
            }
        }
    }
    if fg.1 == 0.0 || bg.1 == 0.0 {
        return None;
    }
    let fg = fg.0.map(|c| c / fg.1);
    let bg = bg.0.map(|c| c / bg.1);
    let axis: [f64; 3] = std::array::from_fn(|i| fg[i] - bg[i]);
    let norm2: f64 = axis.iter().map(|a| a * a).sum();
    if norm2 < 1.0 {
        return None;
    }

    let mut samples = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if !near(x, y, 1) {
                continue;
            }
            let c = rgb(x, y);
            let cover = ((0..3).map(|i| (c[i] - bg[i]) * axis[i]).sum::<f64>() / norm2).clamp(-0.5, 1.5);
            samples.push((x as f64 + 0.5, y as f64 + 0.5, cover));
        }
    }
    let mass: f64 = samples.iter().map(|s| s.2).sum();
    let cx = samples.iter().map(|s| s.0 * s.2).sum::<f64>() / mass;
    let cy = samples.iter().map(|s| s.1 * s.2).sum::<f64>() / mass;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y, c) in &samples {
        sxx += c * (x - cx).powi(2);
        syy += c * (y - cy).powi(2);
        sxy += c * (x - cx) * (y - cy);
    }
    // Each pixel spreads its mass over a unit square.
    let (sxx, syy, sxy) = (sxx / mass + 1.0 / 12.0, syy / mass + 1.0 / 12.0, sxy / mass);
    let lambda = (sxx + syy) / 2.0 + ((sxx - syy).powi(2) / 4.0 + sxy * sxy).sqrt();
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let semi = 2.0 * lambda.sqrt();
    let (ux, uy) = (angle.cos() * semi, angle.sin() * semi);
    Some((Pixel::new(cx + ux, cy + uy), Pixel::new(cx - ux, cy - uy)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use crate::vision::render::{render_scene, RenderParams, SceneDisc};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn synthetic_blob(area: usize, circularity: f64) -> Blob {
        Blob {
            color: ColorId(0),
            area,
            centroid: Pixel::new(10.0, 10.0),
            contour: vec![],
            circularity,
            major_axis: (Pixel::new(5.0, 10.0), Pixel::new(15.0, 10.0)),
            bbox: (5, 5, 15, 15),
        }
    }

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::centered(800.0, 640, 480).unwrap()
    }

    #[test]
    fn size_and_shape_gates() {
        let k = camera();
        let p = DetectorParams::default();
        let exp = expected_blob_area(&k, 0.3, 6.0).round() as usize;
        let kept = filter_outliers(&[synthetic_blob(exp, 1.0)], 6.0, &k, 0.3, &p);
        assert_eq!(kept.len(), 1);
        assert!(filter_outliers(&[synthetic_blob(exp * 100, 1.0)], 6.0, &k, 0.3, &p).is_empty());
        assert!(filter_outliers(&[synthetic_blob(exp, 0.3)], 6.0, &k, 0.3, &p).is_empty());
    }

    #[test]
    fn filter_is_idempotent_and_never_grows() {
        let k = camera();
        let p = DetectorParams::default();
        let exp = expected_blob_area(&k, 0.3, 6.0) as usize;
        let blobs: Vec<_> = [exp / 5, exp, exp * 2, exp * 4, exp / 2]
            .iter()
            .zip([0.9, 0.5, 0.7, 1.0, 0.65])
            .map(|(a, c)| synthetic_blob(*a, c))
            .collect();
        let once = filter_outliers(&blobs, 6.0, &k, 0.3, &p);
        assert!(once.len() <= blobs.len());
        assert_eq!(filter_outliers(&once, 6.0, &k, 0.3, &p), once);
    }

    #[test]
    fn rendered_disc_at_mid_altitude_survives() {
        let k = camera();
        let pose = Pose::new(Rotation::nadir(), Vec3::new(0.0, 0.0, 7.5));
        let disc = SceneDisc { center: Vec3::new(0.4, 0.2, 0.0), diameter: 0.3, rgb: [200, 30, 30] };
        let img = render_scene(&[disc], &pose, &k, &RenderParams::default(), &mut ChaCha8Rng::seed_from_u64(0));
        let masks = threshold(&img, &[ColorClass::red()]);
        let blobs = extract_blobs(&masks[0], 20, ColorId(0));
        assert_eq!(blobs.len(), 1);
        assert_eq!(filter_outliers(&blobs, 7.5, &k, 0.3, &DetectorParams::default()).len(), 1);
    }

    #[test]
    fn no_colored_pixels_no_detections() {
        let k = camera();
        let pose = Pose::new(Rotation::nadir(), Vec3::new(0.0, 0.0, 5.0));
        let img = Image::filled(640, 480, [70, 120, 50]);
        let (dets, diag) = detect_objects(&img, &pose, &k, &[ColorClass::red()], 0.3, 0.0, &DetectorParams::default());
        assert!(dets.is_empty());
        assert_eq!(diag, DetectionDiagnostics::default());
    }

    #[test]
    fn centered_disc_localized_within_half_percent() {
        let k = camera();
        let pose = Pose::new(Rotation::nadir(), Vec3::new(1.0, -2.0, 5.0));
        let truth = Vec3::new(1.0, -2.0, 0.0);
        let disc = SceneDisc { center: truth, diameter: 0.3, rgb: [200, 30, 30] };
        let img = render_scene(&[disc], &pose, &k, &RenderParams::default(), &mut ChaCha8Rng::seed_from_u64(0));
        let (dets, _) = detect_objects(&img, &pose, &k, &[ColorClass::red()], 0.3, 1.5, &DetectorParams::default());
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].timestamp, 1.5);
        let err = (dets[0].position - truth).norm();
        assert!(err < 0.005 * 5.0, "error {err}");
    }

    #[test]
    fn detection_is_deterministic() {
        let k = camera();
        let pose = Pose::new(Rotation::from_euler(0.1, -0.05, 0.3).compose(&Rotation::nadir()), Vec3::new(0.0, 0.0, 6.0));
        let discs = [
            SceneDisc { center: Vec3::new(0.5, 0.3, 0.0), diameter: 0.3, rgb: [200, 30, 30] },
            SceneDisc { center: Vec3::new(-0.8, 0.6, 0.0), diameter: 0.3, rgb: [200, 30, 30] },
        ];
        let params = RenderParams { noise_sigma: 4.0, ..Default::default() };
        let img = render_scene(&discs, &pose, &k, &params, &mut ChaCha8Rng::seed_from_u64(5));
        let run = || detect_objects(&img, &pose, &k, &[ColorClass::red()], 0.3, 0.0, &DetectorParams::default());
        let (a, _) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }
}
