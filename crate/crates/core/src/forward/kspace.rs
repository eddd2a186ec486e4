use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{add_noise, check_len, LinearOperator, Modality, SamplingSpec};
use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Weight of a DC sample relative to the smallest nonzero ramp weight.
///
/// The central disk of radius `Δk/2` has area `πΔk²/4`; split across the
/// spokes that all pass through DC this is a quarter of the ramp weight at
/// `|k| = Δk`.
pub const DC_WEIGHT_FRACTION: f64 = 0.25;

/// Radial k-space samples.
///
/// `sample_coords` are `(kx, ky)` in cycles per field of view, within
/// `[-N/2, N/2]` per component.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceData {
    pub image_size: usize,
    pub num_spokes: usize,
    pub sample_coords: Vec<[f64; 2]>,
    pub values: Vec<Complex64>,
    pub density_weights: Vec<f64>,
}

impl KSpaceData {
    pub fn validate(&self) -> Result<()> {
        let n = self.sample_coords.len();
        if self.values.len() != n || self.density_weights.len() != n {
            return Err(Error::Shape(format!(
                "{n} coordinates, {} values, {} density weights",
                self.values.len(),
                self.density_weights.len()
            )));
        }
        if self.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Input("non-finite k-space value".into()));
        }
        if self.density_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Input("density weights must be finite and >= 0".into()));
        }
        check_band(self.image_size, &self.sample_coords)
    }

    /// Real parts followed by imaginary parts.
    pub fn to_vector(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| v.re)
            .chain(self.values.iter().map(|v| v.im))
            .collect()
    }
}

/// Angle of spoke `k`: `k · π(3 - √5)` wrapped into `[0, π)`.
pub fn golden_angle(k: usize) -> f64 {
    (k as f64 * PI * (3.0 - 5f64.sqrt())).rem_euclid(PI)
}

/// Sample positions of `num_spokes` golden-angle spokes.
///
/// Each spoke holds `samples_per_spoke` points spaced `grid_size /
/// samples_per_spoke` apart along its diameter, from `-grid_size/2`
/// upward, with one sample exactly at DC. Samples are ordered spoke by
/// spoke.
pub fn golden_angle_spokes(num_spokes: usize, samples_per_spoke: usize, grid_size: usize) -> Vec<[f64; 2]> {
    let spacing = grid_size as f64 / samples_per_spoke.max(1) as f64;
    let center = (samples_per_spoke / 2) as f64;
    let mut coords = Vec::with_capacity(num_spokes * samples_per_spoke);
    for k in 0..num_spokes {
        let (s, c) = golden_angle(k).sin_cos();
        for j in 0..samples_per_spoke {
            let t = (j as f64 - center) * spacing;
            coords.push([t * c, t * s]);
        }
    }
    coords
}

fn check_band(image_size: usize, coords: &[[f64; 2]]) -> Result<()> {
    let limit = image_size as f64 * 0.5;
    let tol = 1e-9 * limit.max(1.0);
    for (index, &[kx, ky]) in coords.iter().enumerate() {
        if !(kx.abs() <= limit + tol && ky.abs() <= limit + tol) {
            return Err(Error::OutOfBand { index, kx, ky, limit });
        }
    }
    Ok(())
}

/// Ramp density compensation for radial sampling.
///
/// Each sample gets a weight proportional to `|k|`; samples at DC get
/// [`DC_WEIGHT_FRACTION`] of the smallest nonzero weight. Weights are
/// normalized to unit sum and then scaled by the sampled disk area
/// `π·k_max²/N²`, which makes the compensated adjoint return intensities
/// on the scale of the original image.
pub fn density_weights(coords: &[[f64; 2]], image_size: usize) -> Vec<f64> {
    if coords.is_empty() {
        return Vec::new();
    }
    let n2 = (image_size * image_size) as f64;
    let radii: Vec<f64> = coords.iter().map(|[kx, ky]| kx.hypot(*ky)).collect();
    let tiny = 1e-12;
    let min_nonzero = radii.iter().copied().filter(|&r| r > tiny).fold(f64::INFINITY, f64::min);
    if !min_nonzero.is_finite() {
        return vec![1.0 / (n2 * coords.len() as f64); coords.len()];
    }
    let ramp: Vec<f64> = radii
        .iter()
        .map(|&r| if r > tiny { r } else { DC_WEIGHT_FRACTION * min_nonzero })
        .collect();
    let total: f64 = ramp.iter().sum();
    let k_max = radii.iter().copied().fold(0.0, f64::max);
    let scale = PI * k_max * k_max / n2 / total;
    ramp.into_iter().map(|w| w * scale).collect()
}

/// Direct nonuniform DFT `S(k) = Σ_p x_p · exp(-2πi k·p/N)` on an `N × N`
/// grid.
///
/// Pixel positions are centered: pixel `(row, col)` sits at
/// `p = (col - N/2, row - N/2)` and pairs with `(kx, ky)`. The
/// exponential factors are separable, so per-sample row/column phase tables
/// are precomputed once.
#[derive(Debug, Clone)]
pub struct NudftOperator {
    size: usize,
    coords: Vec<[f64; 2]>,
    // phase tables, one row of `size` entries per sample
    col_phase: Vec<Complex64>,
    row_phase: Vec<Complex64>,
}

impl NudftOperator {
    pub fn new(size: usize, coords: &[[f64; 2]]) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidDimensions("image size must be positive".into()));
        }
        check_band(size, coords)?;
        let table = |freq_of: &dyn Fn(&[f64; 2]) -> f64| -> Vec<Complex64> {
            let mut t = Vec::with_capacity(coords.len() * size);
            for k in coords {
                let f = freq_of(k);
                for idx in 0..size {
                    let p = idx as f64 - (size / 2) as f64;
                    t.push(Complex64::from_polar(1.0, -2.0 * PI * f * p / size as f64));
                }
            }
            t
        };
        Ok(Self {
            size,
            coords: coords.to_vec(),
            col_phase: table(&|k| k[0]),
            row_phase: table(&|k| k[1]),
        })
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn num_samples(&self) -> usize {
        self.coords.len()
    }

    pub fn forward_complex(&self, image: &[f64]) -> Result<Vec<Complex64>> {
        let n = self.size;
        check_len("NUDFT input", image.len(), n * n)?;
        Ok((0..self.coords.len())
            .into_par_iter()
            .map(|k| {
                let cols = &self.col_phase[k * n..(k + 1) * n];
                let rows = &self.row_phase[k * n..(k + 1) * n];
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, row_px) in image.chunks_exact(n).enumerate() {
                    let mut inner = Complex64::new(0.0, 0.0);
                    for (x, e) in row_px.iter().zip(cols) {
                        inner.re += x * e.re;
                        inner.im += x * e.im;
                    }
                    acc += inner * rows[i];
                }
                acc
            })
            .collect())
    }

    /// `Re[Σ_k w_k · S_k · exp(+2πi k·p/N)]`, with `w_k = 1` when no weights
    /// are given.
    pub fn adjoint_complex(&self, samples: &[Complex64], weights: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.size;
        check_len("NUDFT adjoint input", samples.len(), self.coords.len())?;
        if let Some(w) = weights {
            check_len("density weights", w.len(), self.coords.len())?;
        }
        let coeffs: Vec<Complex64> = match weights {
            Some(w) => samples.iter().zip(w).map(|(s, w)| s * w).collect(),
            None => samples.to_vec(),
        };
        let mut image = vec![0.0; n * n];
        image.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (k, c) in coeffs.iter().enumerate() {
                let a = c * self.row_phase[k * n + i].conj();
                let cols = &self.col_phase[k * n..(k + 1) * n];
                for (slot, e) in row.iter_mut().zip(cols) {
                    // Re(a · conj(e))
                    *slot += a.re * e.re + a.im * e.im;
                }
            }
        });
        Ok(image)
    }
}

impl LinearOperator for NudftOperator {
    fn image_size(&self) -> usize {
        self.size
    }

    fn measurement_len(&self) -> usize {
        2 * self.coords.len()
    }

    fn apply(&self, image: &[f64]) -> Result<Vec<f64>> {
        let s = self.forward_complex(image)?;
        Ok(s.iter().map(|v| v.re).chain(s.iter().map(|v| v.im)).collect())
    }

    fn adjoint(&self, measurements: &[f64]) -> Result<Vec<f64>> {
        check_len("NUDFT adjoint input", measurements.len(), self.measurement_len())?;
        let k = self.coords.len();
        let samples: Vec<Complex64> = (0..k)
            .map(|i| Complex64::new(measurements[i], measurements[k + i]))
            .collect();
        self.adjoint_complex(&samples, None)
    }
}

/// Samples the image's spectrum at the given coordinates.
pub fn nudft_forward(image: &ImageGrid, coords: &[[f64; 2]]) -> Result<Vec<Complex64>> {
    let size = image.square_size()?;
    NudftOperator::new(size, coords)?.forward_complex(image.values())
}

/// Adjoint NUDFT, optionally density compensated (the analytic MRI baseline).
pub fn nudft_adjoint(samples: &KSpaceData, image_shape: &[usize], apply_density_compensation: bool) -> Result<ImageGrid> {
    if image_shape != [samples.image_size, samples.image_size] {
        return Err(Error::Shape(format!(
            "k-space was sampled for a {0}×{0} grid, adjoint requested for {image_shape:?}",
            samples.image_size
        )));
    }
    check_len("density weights", samples.density_weights.len(), samples.sample_coords.len())?;
    let op = NudftOperator::new(samples.image_size, &samples.sample_coords)?;
    let weights = apply_density_compensation.then_some(samples.density_weights.as_slice());
    let values = op.adjoint_complex(&samples.values, weights)?;
    ImageGrid::new(image_shape.to_vec(), values)
}

/// Golden-angle radial acquisition of a square image.
pub fn simulate_kspace(image: &ImageGrid, spec: &SamplingSpec) -> Result<KSpaceData> {
    if spec.modality != Modality::Mri {
        return Err(Error::Config("k-space simulation needs an MRI sampling spec".into()));
    }
    spec.validate()?;
    let size = image.square_size()?;
    let coords = golden_angle_spokes(spec.views, spec.samples_for(size), size);
    let op = NudftOperator::new(size, &coords)?;
    let mut values = op.forward_complex(image.values())?;
    if spec.noise_sigma > 0.0 {
        let mut flat: Vec<f64> = values.iter().flat_map(|v| [v.re, v.im]).collect();
        add_noise(&mut flat, spec.noise_sigma, spec.noise_seed)?;
        for (v, pair) in values.iter_mut().zip(flat.chunks_exact(2)) {
            *v = Complex64::new(pair[0], pair[1]);
        }
    }
    let density_weights = density_weights(&coords, size);
    Ok(KSpaceData {
        image_size: size,
        num_spokes: spec.views,
        sample_coords: coords,
        values,
        density_weights,
    })
}
