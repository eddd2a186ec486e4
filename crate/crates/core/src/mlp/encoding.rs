use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Real;
use crate::error::{Error, Result};

/// Gaussian random Fourier feature map `c -> [cos(2πBc), sin(2πBc)]`.
///
/// `B` has one row per feature (`m` rows) and one column per input
/// dimension; entries are drawn from `N(0, sigma²)` and are measured in
/// cycles per unit coordinate. The matrix is fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEncoding {
    matrix_b: Array2<f64>,
    sigma: f64,
    seed: u64,
}

impl FourierEncoding {
    pub fn new(features: usize, input_dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        if features == 0 || input_dim == 0 {
            return Err(Error::InvalidDimensions(format!(
                "Fourier encoding needs m >= 1 and n >= 1, got m={features}, n={input_dim}"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Config(format!("Fourier sigma must be positive, got {sigma}")));
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrix_b = Array2::from_shape_simple_fn((features, input_dim), || normal.sample(&mut rng));
        Ok(Self {
            matrix_b,
            sigma,
            seed,
        })
    }

    /// Wraps an explicit projection matrix (rows = features).
    pub fn from_matrix(matrix_b: Array2<f64>) -> Result<Self> {
        if matrix_b.is_empty() {
            return Err(Error::InvalidDimensions("empty Fourier matrix".into()));
        }
        if matrix_b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite Fourier matrix entry".into()));
        }
        Ok(Self {
            matrix_b,
            sigma: f64::NAN,
            seed: 0,
        })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix_b
    }

    pub fn features(&self) -> usize {
        self.matrix_b.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix_b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.features()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Encodes a batch of coordinates (one point per row). Each output row
    /// holds the `m` cosines followed by the `m` sines.
    pub fn encode<T: Real>(&self, coords: ArrayView2<f64>) -> Result<Array2<T>> {
        if coords.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "coordinates have {} dims, encoding expects {}",
                coords.ncols(),
                self.input_dim()
            )));
        }
        for ((point, dim), &value) in coords.indexed_iter() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::CoordinateOutOfRange { point, dim, value });
            }
        }
        let m = self.features();
        // phases in cycles: coords · Bᵀ
        let phases = coords.dot(&self.matrix_b.t());
        let mut out = Array2::<T>::zeros((coords.nrows(), 2 * m));
        for (mut row, phase_row) in out.rows_mut().into_iter().zip(phases.rows()) {
            for (j, &p) in phase_row.iter().enumerate() {
                let (s, c) = (2.0 * PI * p).sin_cos();
                row[j] = T::from_f64(c);
                row[m + j] = T::from_f64(s);
            }
        }
        Ok(out)
    }
}
