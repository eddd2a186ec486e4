use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::radon::{ParallelBeam, SinogramData};
use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Filtered backprojection.
///
/// Each projection is convolved with the band-limited Ram-Lak kernel
/// (`1/4` at zero, `-1/(πn)²` at odd taps) by FFT with zero padding to a
/// power of two of at least twice the bin count, then backprojected with
/// linear interpolation and scaled by `π / num_angles`.
pub fn fbp_reconstruct(sino: &SinogramData, image_shape: &[usize]) -> Result<ImageGrid> {
    if image_shape != [sino.image_size, sino.image_size] {
        return Err(Error::Shape(format!(
            "sinogram was acquired on a {0}×{0} grid, FBP requested for {image_shape:?}",
            sino.image_size
        )));
    }
    let geom = ParallelBeam::from_sinogram(sino)?;
    let n = sino.image_size;
    let bins = sino.num_bins();
    let pitch = geom.pitch();

    let padded = (2 * bins).next_power_of_two().max(64);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(padded);
    let ifft = planner.plan_fft_inverse(padded);

    let mut kernel: Vec<Complex64> = (0..padded)
        .map(|k| {
            let m = if k <= padded / 2 { k as i64 } else { k as i64 - padded as i64 };
            let h = if m == 0 {
                0.25
            } else if m % 2 != 0 {
                -1.0 / (PI * m as f64).powi(2)
            } else {
                0.0
            };
            Complex64::new(h, 0.0)
        })
        .collect();
    fft.process(&mut kernel);
    // kernel is real and even, so its spectrum is real
    let response: Vec<f64> = kernel.iter().map(|c| c.re).collect();

    let mut filtered = vec![0.0; sino.angles.len() * bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); padded];
    for (a, row) in sino.values.rows().into_iter().enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (slot, &v) in buf.iter_mut().zip(row.iter()) {
            slot.re = v;
        }
        fft.process(&mut buf);
        for (c, &h) in buf.iter_mut().zip(&response) {
            *c *= h;
        }
        ifft.process(&mut buf);
        // rustfft leaves the inverse unnormalized; the kernel is in 1/pitch² units
        let scale = 1.0 / (padded as f64 * pitch);
        for (b, slot) in filtered[a * bins..(a + 1) * bins].iter_mut().enumerate() {
            *slot = buf[b].re * scale;
        }
    }

    let half = n as f64 * 0.5;
    let mid = (bins - 1) as f64 * 0.5;
    let mut image = vec![0.0; n * n];
    for (a, &angle) in sino.angles.iter().enumerate() {
        let (c, s) = (angle.cos(), angle.sin());
        let proj = &filtered[a * bins..(a + 1) * bins];
        for i in 0..n {
            let y = i as f64 + 0.5 - half;
            for j in 0..n {
                let x = j as f64 + 0.5 - half;
                let pos = (x * c + y * s) / pitch + mid;
                let b0 = pos.floor();
                let frac = pos - b0;
                let b0 = b0 as isize;
                let mut v = 0.0;
                if b0 >= 0 && (b0 as usize) < bins {
                    v += (1.0 - frac) * proj[b0 as usize];
                }
                if b0 + 1 >= 0 && ((b0 + 1) as usize) < bins {
                    v += frac * proj[(b0 + 1) as usize];
                }
                image[i * n + j] += v;
            }
        }
    }
    let scale = PI / sino.angles.len() as f64;
    image.iter_mut().for_each(|v| *v *= scale);
    ImageGrid::new(vec![n, n], image)
}
