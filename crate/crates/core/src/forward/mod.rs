//! Linear sensing operators `A` and the classical reconstructions built on
//! their adjoints.
//!
//! Both operators act on square 2D images stored row-major. Measurements are
//! exposed to the training loop as a flat real vector: a CT sinogram is its
//! `angles × bins` values, MRI k-space is all real parts followed by all
//! imaginary parts.

mod fbp;
mod kspace;
mod radon;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use fbp::fbp_reconstruct;
pub use kspace::{
    density_weights, golden_angle, golden_angle_spokes, nudft_adjoint, nudft_forward, simulate_kspace,
    KSpaceData, NudftOperator, DC_WEIGHT_FRACTION,
};
pub use radon::{
    default_detector_bins, radon_adjoint, radon_forward, ParallelBeam, SinogramData, DEFAULT_DETECTOR_PITCH, RAY_STEP,
};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Ct,
    Mri,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::Ct => "ct",
            Modality::Mri => "mri",
        })
    }
}

fn default_pitch() -> f64 {
    DEFAULT_DETECTOR_PITCH
}

/// How measurements are acquired.
///
/// `views` is the number of projection angles (CT) or radial spokes (MRI).
/// `samples` is the detector bin count (CT, default `ceil(√2·N / pitch)`) or the
/// samples per spoke (MRI, default `2N`). `noise_sigma` is the standard
/// deviation of additive Gaussian noise in measurement units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    pub modality: Modality,
    pub views: usize,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub noise_seed: u64,
    /// CT detector spacing in pixels.
    #[serde(default = "default_pitch")]
    pub detector_pitch: f64,
}

impl SamplingSpec {
    pub fn ct(views: usize) -> Self {
        Self {
            modality: Modality::Ct,
            views,
            samples: None,
            noise_sigma: 0.0,
            noise_seed: 0,
            detector_pitch: DEFAULT_DETECTOR_PITCH,
        }
    }

    pub fn mri(spokes: usize) -> Self {
        Self {
            modality: Modality::Mri,
            ..Self::ct(spokes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.views == 0 {
            return Err(Error::Config("need at least one view/spoke".into()));
        }
        if self.samples == Some(0) {
            return Err(Error::Config("samples per view must be positive".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma)));
        }
        if !(self.detector_pitch.is_finite() && self.detector_pitch > 0.0) {
            return Err(Error::Config(format!("detector pitch must be positive, got {}", self.detector_pitch)));
        }
        Ok(())
    }

    /// Resolved per-view sample count for an `image_size`-wide image.
    pub fn samples_for(&self, image_size: usize) -> usize {
        self.samples.unwrap_or(match self.modality {
            Modality::Ct => default_detector_bins(image_size, self.detector_pitch),
            Modality::Mri => 2 * image_size,
        })
    }
}

/// A flat-vector linear map between a square image and its measurements.
pub trait LinearOperator: Sync {
    fn image_size(&self) -> usize;

    fn measurement_len(&self) -> usize;

    fn apply(&self, image: &[f64]) -> Result<Vec<f64>>;

    /// Exact transpose of [`apply`](Self::apply).
    fn adjoint(&self, measurements: &[f64]) -> Result<Vec<f64>>;
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what}: expected {want} values, got {got}")));
    }
    Ok(())
}

/// Measured data together with its acquisition geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurements {
    Sinogram(SinogramData),
    KSpace(KSpaceData),
}

impl Measurements {
    pub fn modality(&self) -> Modality {
        match self {
            Measurements::Sinogram(_) => Modality::Ct,
            Measurements::KSpace(_) => Modality::Mri,
        }
    }

    pub fn image_size(&self) -> usize {
        match self {
            Measurements::Sinogram(s) => s.image_size,
            Measurements::KSpace(k) => k.image_size,
        }
    }

    /// Number of views (CT) or spokes (MRI).
    pub fn views(&self) -> usize {
        match self {
            Measurements::Sinogram(s) => s.angles.len(),
            Measurements::KSpace(k) => k.num_spokes,
        }
    }

    /// Flat real vector in the operator's measurement layout.
    pub fn to_vector(&self) -> Vec<f64> {
        match self {
            Measurements::Sinogram(s) => s.values.iter().copied().collect(),
            Measurements::KSpace(k) => k.to_vector(),
        }
    }

    /// The forward operator matching this geometry.
    pub fn operator(&self) -> Result<Operator> {
        Ok(match self {
            Measurements::Sinogram(s) => Operator::Radon(ParallelBeam::from_sinogram(s)?),
            Measurements::KSpace(k) => Operator::Nudft(NudftOperator::new(k.image_size, &k.sample_coords)?),
        })
    }

    /// Analytic baseline: FBP for CT, density-compensated adjoint for MRI.
    pub fn baseline_reconstruction(&self) -> Result<ImageGrid> {
        let n = self.image_size();
        match self {
            Measurements::Sinogram(s) => fbp_reconstruct(s, &[n, n]),
            Measurements::KSpace(k) => nudft_adjoint(k, &[n, n], true),
        }
    }
}

/// The available forward models.
#[derive(Debug, Clone)]
pub enum Operator {
    Radon(ParallelBeam),
    Nudft(NudftOperator),
}

impl Operator {
    pub fn modality(&self) -> Modality {
        match self {
            Operator::Radon(_) => Modality::Ct,
            Operator::Nudft(_) => Modality::Mri,
        }
    }
}

impl LinearOperator for Operator {
    fn image_size(&self) -> usize {
        match self {
            Operator::Radon(op) => op.image_size(),
            Operator::Nudft(op) => op.image_size(),
        }
    }

    fn measurement_len(&self) -> usize {
        match self {
            Operator::Radon(op) => op.measurement_len(),
            Operator::Nudft(op) => op.measurement_len(),
        }
    }

    fn apply(&self, image: &[f64]) -> Result<Vec<f64>> {
        match self {
            Operator::Radon(op) => op.apply(image),
            Operator::Nudft(op) => op.apply(image),
        }
    }

    fn adjoint(&self, measurements: &[f64]) -> Result<Vec<f64>> {
        match self {
            Operator::Radon(op) => op.adjoint(measurements),
            Operator::Nudft(op) => op.adjoint(measurements),
        }
    }
}

/// Simulates `y = A x + e` for the modality in `spec`.
pub fn simulate(image: &ImageGrid, spec: &SamplingSpec) -> Result<Measurements> {
    match spec.modality {
        Modality::Ct => radon_forward(image, spec).map(Measurements::Sinogram),
        Modality::Mri => simulate_kspace(image, spec).map(Measurements::KSpace),
    }
}

/// Adds seeded `N(0, sigma²)` noise to every entry.
pub(crate) fn add_noise(values: &mut [f64], sigma: f64, seed: u64) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    values.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    Ok(())
}
