//! 8-connected component extraction and contour/shape properties.

use std::f64::consts::PI;

use crate::geometry::Pixel;

use super::color::ColorId;
use super::image::Mask;

const NEIGHBORS_CW: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub color: ColorId,
    pub area: usize,
    /// Mean of pixel centers (pixel `(c, r)` has center `(c + 0.5, r + 0.5)`).
    pub centroid: Pixel,
    /// Outer boundary pixels in clockwise tracing order.
    pub contour: Vec<(u32, u32)>,
    /// `4 pi area / perimeter^2`, capped at 1.
    pub circularity: f64,
    pub major_axis: (Pixel, Pixel),
    /// Inclusive pixel bounding box `(min_x, min_y, max_x, max_y)`.
    pub bbox: (u32, u32, u32, u32),
}

impl Blob {
    pub fn major_axis_length(&self) -> f64 {
        self.major_axis.0.distance(&self.major_axis.1)
    }

    pub fn touches_border(&self, width: u32, height: u32) -> bool {
        self.bbox.0 == 0 || self.bbox.1 == 0 || self.bbox.2 + 1 >= width || self.bbox.3 + 1 >= height
    }
}

/// Connected components of `mask` with at least `min_area` pixels, largest first.
pub fn extract_blobs(mask: &Mask, min_area: usize, color: ColorId) -> Vec<Blob> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let bits = mask.bits();
    let mut label = vec![0u32; w * h];
    let mut blobs = Vec::new();
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !bits[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for (dx, dy) in NEIGHBORS_CW {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if bits[j] && label[j] == 0 {
                    label[j] = next;
                    stack.push(j);
                }
            }
        }
        if pixels.len() >= min_area.max(1) {
            blobs.push(describe(&pixels, start, next, &label, w, h, color));
        }
    }
    blobs.sort_by(|a, b| {
        b.area.cmp(&a.area).then_with(|| {
            (a.centroid.y, a.centroid.x)
                .partial_cmp(&(b.centroid.y, b.centroid.x))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    blobs
}

fn describe(pixels: &[usize], start: usize, id: u32, label: &[u32], w: usize, h: usize, color: ColorId) -> Blob {
    let n = pixels.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    let mut bbox = (u32::MAX, u32::MAX, 0u32, 0u32);
    for &i in pixels {
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        sx += x as f64 + 0.5;
        sy += y as f64 + 0.5;
        bbox = (bbox.0.min(x), bbox.1.min(y), bbox.2.max(x), bbox.3.max(y));
    }
    let (cx, cy) = (sx / n, sy / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &i in pixels {
        let dx = (i % w) as f64 + 0.5 - cx;
        let dy = (i / w) as f64 + 0.5 - cy;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);

    // Principal axis of the second moments; for a filled ellipse the semi-major
    // axis is twice the root of the larger eigenvalue.
    let tr = sxx + syy;
    let disc = ((sxx - syy).powi(2) / 4.0 + sxy * sxy).sqrt();
    let lambda = tr / 2.0 + disc;
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let semi = 2.0 * lambda.max(0.0).sqrt();
    let (ux, uy) = (angle.cos() * semi, angle.sin() * semi);
    let clamp = |p: Pixel| Pixel::new(p.x.clamp(0.0, w as f64), p.y.clamp(0.0, h as f64));
    let major_axis = (clamp(Pixel::new(cx + ux, cy + uy)), clamp(Pixel::new(cx - ux, cy - uy)));

    let contour = trace_contour(start, id, label, w, h);
    let perimeter = closed_length(&contour);
    let circularity = if perimeter > 0.0 { (4.0 * PI * n / (perimeter * perimeter)).min(1.0) } else { 1.0 };

    Blob {
        color,
        area: pixels.len(),
        centroid: Pixel::new(cx, cy),
        contour,
        circularity,
        major_axis,
        bbox,
    }
}

/// Moore-neighbor tracing of the outer boundary, starting from the component's
/// first pixel in raster order (its west and north neighbors are background).
fn trace_contour(start: usize, id: u32, label: &[u32], w: usize, h: usize) -> Vec<(u32, u32)> {
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && label[y as usize * w + x as usize] == id;
    let s = ((start % w) as i64, (start / w) as i64);
    let mut contour = vec![(s.0 as u32, s.1 as u32)];
    // Backtrack direction index (relative to current pixel): west.
    let step = |cur: (i64, i64), back: usize| -> Option<((i64, i64), usize)> {
        for i in 1..=8 {
            let d = (back + i) % 8;
            let (dx, dy) = NEIGHBORS_CW[d];
            if inside(cur.0 + dx, cur.1 + dy) {
                let next = (cur.0 + dx, cur.1 + dy);
                // The previously examined neighbor becomes the backtrack pixel,
                // expressed relative to `next`.
                let (bx, by) = NEIGHBORS_CW[(back + i - 1) % 8];
                let rel = (cur.0 + bx - next.0, cur.1 + by - next.1);
                let back_idx = NEIGHBORS_CW.iter().position(|&o| o == rel).unwrap_or(4);
                return Some((next, back_idx));
            }
        }
        None
    };
    let Some((first, first_back)) = step(s, 4) else {
        return contour;
    };
    let (mut cur, mut back) = (first, first_back);
    let limit = 4 * w * h + 8;
    for _ in 0..limit {
        if cur == s {
            match step(cur, back) {
                Some((n, _)) if n == first => break,
                _ => {}
            }
        }
        contour.push((cur.0 as u32, cur.1 as u32));
        match step(cur, back) {
            Some((n, b)) => {
                cur = n;
                back = b;
            }
            None => break,
        }
    }
    contour
}

fn closed_length(contour: &[(u32, u32)]) -> f64 {
    if contour.len() < 2 {
        return 0.0;
    }
    let seg = |a: (u32, u32), b: (u32, u32)| {
        let dx = a.0 as f64 - b.0 as f64;
        let dy = a.1 as f64 - b.1 as f64;
        (dx * dx + dy * dy).sqrt()
    };
    contour.windows(2).map(|p| seg(p[0], p[1])).sum::<f64>() + seg(contour[contour.len() - 1], contour[0])
}
