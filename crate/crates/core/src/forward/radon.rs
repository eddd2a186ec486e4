use std::f64::consts::{PI, SQRT_2};

use ndarray::Array2;
use rayon::prelude::*;

use super::{add_noise, check_len, LinearOperator, Modality, SamplingSpec};
use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Distance between samples along a ray, in pixels.
pub const RAY_STEP: f64 = 0.5;

/// Default detector spacing, in pixels.
pub const DEFAULT_DETECTOR_PITCH: f64 = 0.5;

/// Detector bins needed to cover the image diagonal at `pitch`.
pub fn default_detector_bins(image_size: usize, pitch: f64) -> usize {
    (SQRT_2 * image_size as f64 / pitch).ceil() as usize
}

/// Parallel-beam sinogram.
///
/// `detector_offsets` are signed distances from the rotation center in
/// image-width units; `values[[a, b]]` is the line integral (intensity ×
/// pixel length) along the ray at `angles[a]`, offset `detector_offsets[b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinogramData {
    pub image_size: usize,
    pub angles: Vec<f64>,
    pub detector_offsets: Vec<f64>,
    pub values: Array2<f64>,
}

impl SinogramData {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.angles.is_empty() || self.detector_offsets.is_empty() {
            return Err(Error::InvalidDimensions("empty sinogram geometry".into()));
        }
        if self.values.dim() != (self.angles.len(), self.detector_offsets.len()) {
            return Err(Error::Shape(format!(
                "sinogram values are {:?}, geometry is {} angles × {} bins",
                self.values.dim(),
                self.angles.len(),
                self.detector_offsets.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite sinogram value".into()));
        }
        if self.angles.iter().any(|a| !(0.0..PI).contains(a)) || self.angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input("angles must be strictly increasing in [0, π)".into()));
        }
        let offs = &self.detector_offsets;
        let n = offs.len();
        if n > 1 {
            let pitch = offs[1] - offs[0];
            let uniform = offs
                .windows(2)
                .all(|w| ((w[1] - w[0]) - pitch).abs() <= 1e-9 * pitch.abs().max(1.0));
            let symmetric = (0..n).all(|i| (offs[i] + offs[n - 1 - i]).abs() <= 1e-9);
            if !(pitch > 0.0 && uniform && symmetric) {
                return Err(Error::Input("detector offsets must be uniform, increasing and centered".into()));
            }
        } else if offs[0] != 0.0 {
            return Err(Error::Input("a single detector bin must sit at offset 0".into()));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.detector_offsets.len()
    }
}

/// Ray-driven parallel-beam projector on an `N × N` pixel grid.
///
/// Pixel `(row, col)` is centered at `x = col + 0.5 - N/2`,
/// `y = row + 0.5 - N/2`. The ray at angle `θ` and offset `s` (pixels) is
/// `s·(cos θ, sin θ) + t·(-sin θ, cos θ)`; it is sampled every
/// [`RAY_STEP`] pixels with bilinear interpolation. The adjoint scatters
/// with exactly the same weights.
#[derive(Debug, Clone)]
pub struct ParallelBeam {
    size: usize,
    angles: Vec<f64>,
    trig: Vec<(f64, f64)>,
    num_bins: usize,
    pitch: f64,
    samples: Vec<f64>,
}

impl ParallelBeam {
    pub fn new(size: usize, angles: Vec<f64>, num_bins: usize, pitch: f64) -> Result<Self> {
        if size == 0 || num_bins == 0 || angles.is_empty() {
            return Err(Error::InvalidDimensions(format!(
                "projector needs a non-empty image, angle list and detector (size={size}, bins={num_bins}, angles={})",
                angles.len()
            )));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::Config(format!("detector pitch must be positive, got {pitch}")));
        }
        let trig = angles.iter().map(|a| (a.cos(), a.sin())).collect();
        // ray parameter range covering the whole image plus interpolation support
        let t_max = size as f64 * 0.5 * SQRT_2 + 1.0;
        let count = (2.0 * t_max / RAY_STEP).ceil() as usize;
        let samples = (0..count)
            .map(|k| (k as f64 - (count - 1) as f64 * 0.5) * RAY_STEP)
            .collect();
        Ok(Self {
            size,
            angles,
            trig,
            num_bins,
            pitch,
            samples,
        })
    }

    /// `views` angles `kπ/views` spread over a half circle.
    pub fn uniform(size: usize, views: usize, bins: Option<usize>, pitch: f64) -> Result<Self> {
        let angles = (0..views).map(|k| k as f64 * PI / views as f64).collect();
        Self::new(size, angles, bins.unwrap_or_else(|| default_detector_bins(size, pitch)), pitch)
    }

    pub fn from_sinogram(sino: &SinogramData) -> Result<Self> {
        sino.validate()?;
        let pitch = match sino.detector_offsets.as_slice() {
            [a, b, ..] => (b - a) * sino.image_size as f64,
            _ => 1.0,
        };
        Self::new(sino.image_size, sino.angles.clone(), sino.num_bins(), pitch)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    /// Detector pitch in pixels.
    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Bin centers in pixels.
    pub fn offsets_pixels(&self) -> Vec<f64> {
        let mid = (self.num_bins - 1) as f64 * 0.5;
        (0..self.num_bins).map(|b| (b as f64 - mid) * self.pitch).collect()
    }

    /// Bin centers in image-width units.
    pub fn offsets_normalized(&self) -> Vec<f64> {
        let n = self.size as f64;
        self.offsets_pixels().into_iter().map(|s| s / n).collect()
    }

    /// Calls `f(pixel_index, weight)` for every interpolation weight of one ray.
    fn for_each_weight(&self, angle: usize, bin: usize, mut f: impl FnMut(usize, f64)) {
        let n = self.size;
        let nf = n as f64;
        let half = nf * 0.5;
        let (c, s) = self.trig[angle];
        let offset = (bin as f64 - (self.num_bins - 1) as f64 * 0.5) * self.pitch;
        for &t in &self.samples {
            // continuous pixel index; pixel centers sit at integers
            let u = offset * c - t * s + half - 0.5;
            let v = offset * s + t * c + half - 0.5;
            if u <= -1.0 || v <= -1.0 || u >= nf || v >= nf {
                continue;
            }
            let (u0, v0) = (u.floor(), v.floor());
            let (fu, fv) = (u - u0, v - v0);
            let (j0, i0) = (u0 as isize, v0 as isize);
            let taps = [
                (i0, j0, (1.0 - fv) * (1.0 - fu)),
                (i0, j0 + 1, (1.0 - fv) * fu),
                (i0 + 1, j0, fv * (1.0 - fu)),
                (i0 + 1, j0 + 1, fv * fu),
            ];
            for (i, j, w) in taps {
                if w != 0.0 && i >= 0 && j >= 0 && (i as usize) < n && (j as usize) < n {
                    f(i as usize * n + j as usize, w * RAY_STEP);
                }
            }
        }
    }
}

impl LinearOperator for ParallelBeam {
    fn image_size(&self) -> usize {
        self.size
    }

    fn measurement_len(&self) -> usize {
        self.angles.len() * self.num_bins
    }

    fn apply(&self, image: &[f64]) -> Result<Vec<f64>> {
        check_len("projector input", image.len(), self.size * self.size)?;
        let bins = self.num_bins;
        let mut out = vec![0.0; self.measurement_len()];
        out.par_chunks_mut(bins).enumerate().for_each(|(a, row)| {
            for (b, slot) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                self.for_each_weight(a, b, |p, w| acc += w * image[p]);
                *slot = acc;
            }
        });
        Ok(out)
    }

    fn adjoint(&self, measurements: &[f64]) -> Result<Vec<f64>> {
        check_len("projector adjoint input", measurements.len(), self.measurement_len())?;
        let mut image = vec![0.0; self.size * self.size];
        for a in 0..self.angles.len() {
            for b in 0..self.num_bins {
                let y = measurements[a * self.num_bins + b];
                if y != 0.0 {
                    self.for_each_weight(a, b, |p, w| image[p] += w * y);
                }
            }
        }
        Ok(image)
    }
}

/// Projects a square image at `spec.views` uniformly spaced angles.
pub fn radon_forward(image: &ImageGrid, spec: &SamplingSpec) -> Result<SinogramData> {
    if spec.modality != Modality::Ct {
        return Err(Error::Config("radon_forward needs a CT sampling spec".into()));
    }
    spec.validate()?;
    let size = image.square_size()?;
    let op = ParallelBeam::uniform(size, spec.views, Some(spec.samples_for(size)), spec.detector_pitch)?;
    let mut values = op.apply(image.values())?;
    add_noise(&mut values, spec.noise_sigma, spec.noise_seed)?;
    Ok(SinogramData {
        image_size: size,
        angles: op.angles.clone(),
        detector_offsets: op.offsets_normalized(),
        values: Array2::from_shape_vec((op.angles.len(), op.num_bins), values).expect("sized above"),
    })
}

/// Transpose of the projector that produced `sino`.
pub fn radon_adjoint(sino: &SinogramData, image_shape: &[usize]) -> Result<ImageGrid> {
    if image_shape != [sino.image_size, sino.image_size] {
        return Err(Error::Shape(format!(
            "sinogram was acquired on a {0}×{0} grid, adjoint requested for {image_shape:?}",
            sino.image_size
        )));
    }
    let op = ParallelBeam::from_sinogram(sino)?;
    let values = op.adjoint(sino.values.as_slice().expect("standard layout"))?;
    ImageGrid::new(image_shape.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn zero_image_gives_zero_sinogram() {
        let img = ImageGrid::zeros(vec![16, 16]).unwrap();
        let sino = radon_forward(&img, &SamplingSpec::ct(7)).unwrap();
        assert_eq!(sino.values.dim(), (7, default_detector_bins(16, DEFAULT_DETECTOR_PITCH)));
        assert!(sino.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubling_is_exact() {
        let img = ImageGrid::new(vec![12, 12], random_vec(144, 3)).unwrap();
        let spec = SamplingSpec::ct(9);
        let a = radon_forward(&img, &spec).unwrap();
        let b = radon_forward(&img.scaled(2.0), &spec).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert_eq!(2.0 * x, *y);
        }
    }

    // chord of a centered disk of radius r at offset s is 2·sqrt(r² - s²)
    #[test]
    fn disk_projection_matches_chord_length() {
        let n = 128;
        let r = 40.0;
        let img = ImageGrid::from_fn_2d(n, n, |i, j| {
            let x = j as f64 + 0.5 - n as f64 / 2.0;
            let y = i as f64 + 0.5 - n as f64 / 2.0;
            if x * x + y * y <= r * r {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let spec = SamplingSpec::ct(8);
        let sino = radon_forward(&img, &spec).unwrap();
        let offsets: Vec<f64> = sino.detector_offsets.iter().map(|o| o * n as f64).collect();
        for a in 0..8 {
            for (b, &s) in offsets.iter().enumerate() {
                if s.abs() < 0.75 * r {
                    let chord = 2.0 * (r * r - s * s).sqrt();
                    let rel = (sino.values[[a, b]] - chord).abs() / chord;
                    assert!(rel < 0.02, "angle {a}, s={s}: {} vs {chord}", sino.values[[a, b]]);
                }
            }
        }
    }

    #[test]
    fn adjoint_dot_product() {
        let op = ParallelBeam::uniform(8, 5, None, 1.0).unwrap();
        for seed in 0..5 {
            let x = random_vec(64, seed);
            let y = random_vec(op.measurement_len(), seed + 100);
            let ax = op.apply(&x).unwrap();
            let aty = op.adjoint(&y).unwrap();
            let norm = dot(&ax, &ax).sqrt() * dot(&y, &y).sqrt();
            assert!((dot(&ax, &y) - dot(&x, &aty)).abs() / norm < 1e-12);
        }
    }

    #[test]
    fn single_bin_backprojects_onto_its_ray_footprint() {
        let op = ParallelBeam::uniform(16, 4, None, 1.0).unwrap();
        let mut y = vec![0.0; op.measurement_len()];
        let (a, b) = (1, op.num_bins() / 2 + 3);
        y[a * op.num_bins() + b] = 1.0;
        let img = op.adjoint(&y).unwrap();
        let mut footprint = vec![false; 256];
        op.for_each_weight(a, b, |p, _| footprint[p] = true);
        assert!(img.iter().any(|&v| v > 0.0));
        for (p, &v) in img.iter().enumerate() {
            if !footprint[p] {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn rejects_non_square_and_mismatched_geometry() {
        let img = ImageGrid::zeros(vec![8, 9]).unwrap();
        assert!(matches!(
            radon_forward(&img, &SamplingSpec::ct(3)),
            Err(Error::UnsupportedGeometry(_))
        ));
        let sq = ImageGrid::zeros(vec![8, 8]).unwrap();
        let sino = radon_forward(&sq, &SamplingSpec::ct(3)).unwrap();
        assert!(matches!(radon_adjoint(&sino, &[16, 16]), Err(Error::Shape(_))));
        assert!(radon_adjoint(&sino, &[8, 8]).is_ok());
    }

    #[test]
    fn noise_is_seeded() {
        let img = ImageGrid::filled(vec![8, 8], 0.5).unwrap();
        let mut spec = SamplingSpec::ct(4);
        let clean = radon_forward(&img, &spec).unwrap();
        assert_eq!(clean, radon_forward(&img, &spec).unwrap());
        spec.noise_sigma = 0.1;
        spec.noise_seed = 9;
        let a = radon_forward(&img, &spec).unwrap();
        let b = radon_forward(&img, &spec).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, clean);
    }

    #[test]
    fn sinogram_geometry_is_validated() {
        let img = ImageGrid::filled(vec![8, 8], 0.5).unwrap();
        let mut sino = radon_forward(&img, &SamplingSpec::ct(4)).unwrap();
        assert!(sino.validate().is_ok());
        sino.angles.swap(0, 1);
        assert!(sino.validate().is_err());
    }
}
