use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real-valued image on a regular 2D or 3D grid, stored row-major
/// (the last axis varies fastest).
///
/// Intensities are nominally in `[0, 1]`; `source_range` records the
/// `(min, max)` of the data the image was normalized from so results can be
/// mapped back. Network outputs are not clamped, so values outside `[0, 1]`
/// are allowed here and only clamped by evaluation code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    shape: Vec<usize>,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_range: Option<(f64, f64)>,
}

impl ImageGrid {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        validate_shape(&shape)?;
        let count: usize = shape.iter().product();
        if values.len() != count {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {count} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite intensity at index {i}")));
        }
        Ok(Self {
            shape,
            values,
            source_range: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let count = validate_shape(&shape)?;
        Ok(Self {
            shape,
            values: vec![0.0; count],
            source_range: None,
        })
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Result<Self> {
        let mut img = Self::zeros(shape)?;
        img.values.iter_mut().for_each(|v| *v = value);
        Ok(img)
    }

    /// Builds a 2D image from a function of `(row, col)`.
    pub fn from_fn_2d(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self::new(vec![rows, cols], values)
    }

    /// Linearly rescales raw data so `range.0 -> 0` and `range.1 -> 1`,
    /// recording the range. A degenerate range maps everything to 0.
    pub fn normalized_with(shape: Vec<usize>, raw: &[f64], range: (f64, f64)) -> Result<Self> {
        let span = range.1 - range.0;
        let values = raw
            .iter()
            .map(|&v| if span > 0.0 { (v - range.0) / span } else { 0.0 })
            .collect();
        let mut img = Self::new(shape, values)?;
        img.source_range = Some(range);
        Ok(img)
    }

    /// Normalizes raw data by its own min/max.
    pub fn normalized(shape: Vec<usize>, raw: &[f64]) -> Result<Self> {
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::normalized_with(shape, raw, (lo, hi))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn source_range(&self) -> Option<(f64, f64)> {
        self.source_range
    }

    pub fn set_source_range(&mut self, range: Option<(f64, f64)>) {
        self.source_range = range;
    }

    /// Side length of a square 2D image, or an error for anything else.
    pub fn square_size(&self) -> Result<usize> {
        match self.shape.as_slice() {
            [r, c] if r == c => Ok(*r),
            other => Err(Error::UnsupportedGeometry(format!(
                "expected a square 2D image, got shape {other:?}"
            ))),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.ndim(), 2);
        self.values[row * self.shape[1] + col]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Copy with every intensity clamped to `[0, 1]`.
    pub fn clamped(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn same_shape(&self, other: &ImageGrid) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "image shapes differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

fn validate_shape(shape: &[usize]) -> Result<usize> {
    if !(1..=3).contains(&shape.len()) {
        return Err(Error::InvalidDimensions(format!(
            "images must have 1 to 3 axes, got {}",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidDimensions(format!("zero-length axis in {shape:?}")));
    }
    Ok(shape.iter().product())
}
