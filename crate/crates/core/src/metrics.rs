//! Image quality metrics.
//!
//! Both metrics compare the images as given; evaluation code clamps
//! reconstructions to `[0, 1]` first (see [`evaluate`]).

use crate::error::{Error, Result};
use crate::image::ImageGrid;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio in dB, `10·log10(range² / MSE)`.
/// Identical images give `f64::INFINITY`.
pub fn psnr(test: &ImageGrid, reference: &ImageGrid, data_range: f64) -> Result<f64> {
    test.same_shape(reference)?;
    if !(data_range.is_finite() && data_range > 0.0) {
        return Err(Error::Input(format!("data range must be positive, got {data_range}")));
    }
    let mse = mse(test.values(), reference.values());
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}

/// Normalized 11-tap Gaussian (σ = 1.5).
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (k, v) in w.iter_mut().enumerate() {
        let d = k as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean structural similarity over all full 11×11 Gaussian windows
/// (K1 = 0.01, K2 = 0.03, data range 1). 3D images are scored slice by
/// slice along the first axis and averaged.
pub fn ssim(test: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    test.same_shape(reference)?;
    match *test.shape() {
        [rows, cols] => ssim_2d(test.values(), reference.values(), rows, cols),
        [slices, rows, cols] => {
            let plane = rows * cols;
            let mut total = 0.0;
            for s in 0..slices {
                let range = s * plane..(s + 1) * plane;
                total += ssim_2d(&test.values()[range.clone()], &reference.values()[range], rows, cols)?;
            }
            Ok(total / slices as f64)
        }
        _ => Err(Error::Input("SSIM needs a 2D or 3D image".into())),
    }
}

fn ssim_2d(a: &[f64], b: &[f64], rows: usize, cols: usize) -> Result<f64> {
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::Input(format!(
            "image {rows}×{cols} is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} SSIM window"
        )));
    }
    let w = gaussian_window();
    let products: [Vec<f64>; 5] = [
        a.to_vec(),
        b.to_vec(),
        a.iter().map(|x| x * x).collect(),
        b.iter().map(|y| y * y).collect(),
        a.iter().zip(b).map(|(x, y)| x * y).collect(),
    ];
    let [mu_a, mu_b, aa, bb, ab] = products.map(|p| filter_valid(&p, rows, cols, &w));
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let count = mu_a.len();
    let mut total = 0.0;
    for k in 0..count {
        let (ma, mb) = (mu_a[k], mu_b[k]);
        let var_a = aa[k] - ma * ma;
        let var_b = bb[k] - mb * mb;
        let cov = ab[k] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    Ok(total / count as f64)
}

/// Separable "valid" correlation with the window along both axes.
fn filter_valid(img: &[f64], rows: usize, cols: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let out_c = cols - SSIM_WINDOW + 1;
    let out_r = rows - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; rows * out_c];
    for i in 0..rows {
        for j in 0..out_c {
            let src = &img[i * cols + j..i * cols + j + SSIM_WINDOW];
            horiz[i * out_c + j] = src.iter().zip(w).map(|(x, k)| x * k).sum();
        }
    }
    let mut out = vec![0.0; out_r * out_c];
    for i in 0..out_r {
        for j in 0..out_c {
            out[i * out_c + j] = (0..SSIM_WINDOW).map(|k| w[k] * horiz[(i + k) * out_c + j]).sum();
        }
    }
    out
}

/// Mean absolute difference over pixels where `mask` is set.
pub fn masked_mae(test: &ImageGrid, reference: &ImageGrid, mask: &[bool]) -> Result<f64> {
    test.same_shape(reference)?;
    if mask.len() != test.len() {
        return Err(Error::Shape(format!("mask has {} entries for {} pixels", mask.len(), test.len())));
    }
    let (sum, n) = test
        .values()
        .iter()
        .zip(reference.values())
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((a, b), _)| (s + (a - b).abs(), n + 1));
    if n == 0 {
        return Err(Error::Input("empty mask".into()));
    }
    Ok(sum / n as f64)
}

/// PSNR and SSIM of a reconstruction clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quality {
    pub psnr: f64,
    pub ssim: f64,
}

pub fn evaluate(reconstruction: &ImageGrid, reference: &ImageGrid) -> Result<Quality> {
    let clamped = reconstruction.clamped();
    let reference = reference.clamped();
    Ok(Quality {
        psnr: psnr(&clamped, &reference, 1.0)?,
        ssim: ssim(&clamped, &reference)?,
    })
}
