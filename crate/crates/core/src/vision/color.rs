//! sRGB to CIE L*a*b* (D65) conversion and box thresholds in Lab space.

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// D65 reference white.
const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];
const DELTA: f64 = 6.0 / 29.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

fn srgb_to_linear_table() -> &'static [f64; 256] {
    static TABLE: OnceLock<[f64; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; 256];
        for (i, v) in t.iter_mut().enumerate() {
            let c = i as f64 / 255.0;
            *v = if c <= 0.04045 { c / 12.92 } else { ((c + 0.055) / 1.055).powf(2.4) };
        }
        t
    })
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

pub fn rgb_to_lab(rgb: [u8; 3]) -> Lab {
    let lin = srgb_to_linear_table();
    let (r, g, b) = (lin[rgb[0] as usize], lin[rgb[1] as usize], lin[rgb[2] as usize]);
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let (fx, fy, fz) = (lab_f(x / WHITE[0]), lab_f(y / WHITE[1]), lab_f(z / WHITE[2]));
    Lab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Index of a color class within the detector's class list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColorId(pub u16);

/// Axis-aligned box in Lab space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorClass {
    pub name: String,
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl ColorClass {
    pub fn new(name: impl Into<String>, lower: [f64; 3], upper: [f64; 3]) -> Result<Self, String> {
        let class = Self { name: name.into(), lower, upper };
        class.validate()?;
        Ok(class)
    }

    pub fn validate(&self) -> Result<(), String> {
        if (0..3).any(|i| self.lower[i] > self.upper[i]) {
            return Err(format!("color class `{}`: lower bound exceeds upper bound", self.name));
        }
        Ok(())
    }

    pub fn contains(&self, lab: &Lab) -> bool {
        let v = [lab.l, lab.a, lab.b];
        (0..3).all(|i| v[i] >= self.lower[i] && v[i] <= self.upper[i])
    }

    /// Saturated red objects against grass or sand.
    pub fn red() -> Self {
        Self { name: "red".into(), lower: [20.0, 35.0, 10.0], upper: [90.0, 127.0, 127.0] }
    }

    pub fn blue() -> Self {
        Self { name: "blue".into(), lower: [15.0, -40.0, -128.0], upper: [80.0, 60.0, -30.0] }
    }

    pub fn yellow() -> Self {
        Self { name: "yellow".into(), lower: [60.0, -30.0, 45.0], upper: [100.0, 30.0, 127.0] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_white_and_black() {
        let w = rgb_to_lab([255, 255, 255]);
        assert!((w.l - 100.0).abs() < 0.01, "{w:?}");
        assert!(w.a.abs() < 0.5 && w.b.abs() < 0.5);
        let k = rgb_to_lab([0, 0, 0]);
        assert!(k.l.abs() < 1e-9 && k.a.abs() < 1e-9 && k.b.abs() < 1e-9);
    }

    #[test]
    fn pure_red() {
        // Independent evaluation: linear red = 1, X = 0.4124564, Y = 0.2126729,
        // Z = 0.0193339 -> f(Y) = 0.59685, f(X/Xn) = 0.75717, f(Z/Zn) = 0.26087.
        let fy = 0.2126729f64.cbrt();
        let fx = (0.4124564f64 / 0.95047).cbrt();
        let fz = (0.0193339f64 / 1.08883).cbrt();
        let expected = (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz));
        let lab = rgb_to_lab([255, 0, 0]);
        assert!((lab.l - 53.24).abs() < 0.5 && (lab.l - expected.0).abs() < 1e-9);
        assert!((lab.a - 80.09).abs() < 0.5 && (lab.a - expected.1).abs() < 1e-9);
        assert!((lab.b - 67.20).abs() < 0.5 && (lab.b - expected.2).abs() < 1e-9);
    }

    #[test]
    fn inverted_bounds_rejected() {
        assert!(ColorClass::new("x", [50.0, 0.0, 0.0], [40.0, 10.0, 10.0]).is_err());
    }

    #[test]
    fn default_classes_are_disjoint_on_their_colors() {
        let red = rgb_to_lab([200, 30, 30]);
        let grass = rgb_to_lab([70, 120, 50]);
        assert!(ColorClass::red().contains(&red));
        assert!(!ColorClass::red().contains(&grass));
        assert!(!ColorClass::blue().contains(&red));
        assert!(!ColorClass::yellow().contains(&red));
        assert!(ColorClass::blue().contains(&rgb_to_lab([30, 60, 200])));
        assert!(ColorClass::yellow().contains(&rgb_to_lab([230, 200, 40])));
    }
}
