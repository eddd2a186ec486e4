//! Synthetic longitudinal phantoms: a modified Shepp-Logan head plus
//! elliptical lesions that model change between a prior and a follow-up
//! scan.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// An ellipse of the analytic phantom in `[-1, 1]²` coordinates (y up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub intensity: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub angle_deg: f64,
}

const fn ellipse(intensity: f64, semi_x: f64, semi_y: f64, center_x: f64, center_y: f64, angle_deg: f64) -> Ellipse {
    Ellipse {
        intensity,
        semi_x,
        semi_y,
        center_x,
        center_y,
        angle_deg,
    }
}

/// Modified (high-contrast) Shepp-Logan table.
pub const SHEPP_LOGAN_ELLIPSES: [Ellipse; 10] = [
    ellipse(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    ellipse(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    ellipse(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    ellipse(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    ellipse(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    ellipse(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    ellipse(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    ellipse(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    ellipse(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    ellipse(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_x).powi(2) + (v / self.semi_y).powi(2) <= 1.0
    }
}

/// Analytic phantom value at `(x, y)` in `[-1, 1]²`, before clamping.
pub fn shepp_logan_value(x: f64, y: f64) -> f64 {
    SHEPP_LOGAN_ELLIPSES
        .iter()
        .filter(|e| e.contains(x, y))
        .map(|e| e.intensity)
        .sum()
}

/// Sub-samples per pixel axis when rasterizing the phantom.
pub const PHANTOM_SUPERSAMPLING: usize = 4;

/// `size × size` modified Shepp-Logan phantom. Each pixel is the mean of a
/// regular 4×4 grid of clamped point samples, so edges carry partial-area
/// values. Row 0 is the top of the head.
pub fn shepp_logan(size: usize) -> Result<ImageGrid> {
    if size < 8 {
        return Err(Error::InvalidDimensions(format!("phantom size must be >= 8, got {size}")));
    }
    let n = size as f64;
    let k = PHANTOM_SUPERSAMPLING;
    ImageGrid::from_fn_2d(size, size, |i, j| {
        let mut acc = 0.0;
        for a in 0..k {
            for b in 0..k {
                let x = -1.0 + 2.0 * (j as f64 + (b as f64 + 0.5) / k as f64) / n;
                let y = 1.0 - 2.0 * (i as f64 + (a as f64 + 0.5) / k as f64) / n;
                acc += shepp_logan_value(x, y).clamp(0.0, 1.0);
            }
        }
        acc / (k * k) as f64
    })
}

/// Elliptical intensity change in normalized image coordinates.
///
/// `center` is `(x, y)` = (column, row) as fractions of the image extent;
/// `axes` are the semi-axes in the same units; `angle` rotates the ellipse
/// (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LesionSpec {
    pub center: [f64; 2],
    pub axes: [f64; 2],
    #[serde(default)]
    pub angle: f64,
    pub delta_intensity: f64,
}

impl LesionSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = self.center.iter().chain(&self.axes).all(|v| v.is_finite()) && self.angle.is_finite();
        if !finite || self.axes.iter().any(|&a| a <= 0.0) {
            return Err(Error::Config(format!("lesion needs finite geometry and positive axes: {self:?}")));
        }
        if !(-1.0..=1.0).contains(&self.delta_intensity) {
            return Err(Error::Config(format!(
                "lesion delta must lie in [-1, 1], got {}",
                self.delta_intensity
            )));
        }
        Ok(())
    }

    /// Whether the point `(x, y)` in normalized coordinates lies inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.axes[0]).powi(2) + (v / self.axes[1]).powi(2) <= 1.0
    }

    /// A bright growth in the right hemisphere of the Shepp-Logan head.
    pub fn progression() -> Self {
        Self {
            center: [0.68, 0.34],
            axes: [0.08, 0.06],
            angle: 0.5,
            delta_intensity: 0.3,
        }
    }
}

/// Pixels whose centers fall inside the lesion, row-major.
pub fn lesion_mask(rows: usize, cols: usize, lesion: &LesionSpec) -> Vec<bool> {
    let mut mask = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let x = (j as f64 + 0.5) / cols as f64;
            let y = (i as f64 + 0.5) / rows as f64;
            mask.push(lesion.contains(x, y));
        }
    }
    mask
}

/// Adds the lesion's intensity change inside its ellipse and clamps those
/// pixels to `[0, 1]`. Pixels outside are left untouched.
pub fn perturb_lesion(img: &ImageGrid, lesion: &LesionSpec) -> Result<ImageGrid> {
    lesion.validate()?;
    let (rows, cols) = match img.shape() {
        [r, c] => (*r, *c),
        other => {
            return Err(Error::UnsupportedGeometry(format!(
                "lesions need a 2D image, got shape {other:?}"
            )))
        }
    };
    let mask = lesion_mask(rows, cols, lesion);
    let mut out = img.clone();
    for (v, inside) in out.values_mut().iter_mut().zip(mask) {
        if inside {
            *v = (*v + lesion.delta_intensity).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Prior/target pair: the phantom and the phantom with all lesions applied.
pub fn longitudinal_pair(size: usize, lesions: &[LesionSpec]) -> Result<(ImageGrid, ImageGrid)> {
    let prior = shepp_logan(size)?;
    let mut target = prior.clone();
    for lesion in lesions {
        target = perturb_lesion(&target, lesion)?;
    }
    Ok((prior, target))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantom_basics() {
        assert_eq!(SHEPP_LOGAN_ELLIPSES.len(), 10);
        let p = shepp_logan(64).unwrap();
        assert_eq!(p.shape(), &[64, 64]);
        assert_eq!(p.get(0, 0), 0.0);
        assert_eq!(p.get(63, 63), 0.0);
        assert!(p.values().iter().all(|v| (0.0..=1.0).contains(v)));
        // skull ring and brain interior
        assert!((p.get(3, 32) - 1.0).abs() < 1e-12);
        assert!((p.get(32, 32) - 0.2).abs() < 1e-12);
        assert!(shepp_logan(7).is_err());
    }

    #[test]
    fn resolution_consistency() {
        let small = shepp_logan(64).unwrap();
        let big = shepp_logan(128).unwrap();
        let mut total = 0.0;
        for i in 0..64 {
            for j in 0..64 {
                let avg = (big.get(2 * i, 2 * j)
                    + big.get(2 * i + 1, 2 * j)
                    + big.get(2 * i, 2 * j + 1)
                    + big.get(2 * i + 1, 2 * j + 1))
                    / 4.0;
                total += (avg - small.get(i, j)).abs();
            }
        }
        assert!(total / 4096.0 < 0.02);
    }

    #[test]
    fn zero_delta_is_identity() {
        let p = shepp_logan(32).unwrap();
        let lesion = LesionSpec {
            delta_intensity: 0.0,
            ..LesionSpec::progression()
        };
        assert_eq!(perturb_lesion(&p, &lesion).unwrap(), p);
    }

    #[test]
    fn lesion_outside_support_is_identity() {
        let p = shepp_logan(32).unwrap();
        let lesion = LesionSpec {
            center: [3.0, -2.0],
            axes: [0.2, 0.2],
            angle: 0.0,
            delta_intensity: 0.5,
        };
        assert_eq!(perturb_lesion(&p, &lesion).unwrap(), p);
    }

    #[test]
    fn changed_pixel_count_matches_area() {
        let n = 128;
        let img = ImageGrid::filled(vec![n, n], 0.4).unwrap();
        let lesion = LesionSpec {
            center: [0.45, 0.55],
            axes: [0.12, 0.07],
            angle: 0.3,
            delta_intensity: 0.25,
        };
        let out = perturb_lesion(&img, &lesion).unwrap();
        let changed = out.values().iter().zip(img.values()).filter(|(a, b)| a != b).count() as f64;
        let area = std::f64::consts::PI * 0.12 * 0.07 * (n * n) as f64;
        assert!((changed - area).abs() / area < 0.1, "{changed} vs {area}");
    }

    #[test]
    fn clamped_delta_is_idempotent() {
        let p = shepp_logan(32).unwrap();
        let lesion = LesionSpec {
            delta_intensity: 1.0,
            ..LesionSpec::progression()
        };
        let once = perturb_lesion(&p, &lesion).unwrap();
        assert_eq!(perturb_lesion(&once, &lesion).unwrap(), once);
    }

    #[test]
    fn pixels_outside_are_bitwise_unchanged() {
        let p = shepp_logan(64).unwrap();
        let lesion = LesionSpec::progression();
        let out = perturb_lesion(&p, &lesion).unwrap();
        let mask = lesion_mask(64, 64, &lesion);
        assert!(mask.iter().any(|&m| m));
        for ((a, b), m) in out.values().iter().zip(p.values()).zip(mask) {
            if !m {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn invalid_lesions() {
        let mut l = LesionSpec::progression();
        l.axes[1] = 0.0;
        assert!(l.validate().is_err());
        let mut l = LesionSpec::progression();
        l.delta_intensity = 1.5;
        assert!(l.validate().is_err());
    }
}
