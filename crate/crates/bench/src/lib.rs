//! Shared fixtures for the kernel benchmarks.

use nerp_core::forward::simulate;
use nerp_core::phantom::shepp_logan;
use nerp_core::pipeline::make_coordinate_grid;
use nerp_core::{Activation, ImageGrid, Measurements, ReconConfig, Representation, SamplingSpec};

/// Image side used by every benchmark.
pub const SIZE: usize = 64;

/// Network sized like the 64-pixel experiments: width 128, depth 8.
pub fn network_config() -> ReconConfig {
    ReconConfig {
        width: 128,
        depth: 8,
        fourier_sigma: 1.0,
        ..ReconConfig::ct_defaults()
    }
}

pub fn representation() -> Representation<f32> {
    let cfg = network_config();
    Representation::new(&cfg, Activation::Sine, 2).expect("valid config")
}

/// Fourier-encoded pixel grid for `rep`.
pub fn encoded_grid(rep: &Representation<f32>) -> ndarray::Array2<f32> {
    rep.encoding.encode(make_coordinate_grid(&[SIZE, SIZE]).view()).expect("2D encoding")
}

pub fn phantom() -> ImageGrid {
    shepp_logan(SIZE).expect("positive size")
}

pub fn measurements(spec: &SamplingSpec) -> Measurements {
    simulate(&phantom(), spec).expect("phantom simulates")
}
