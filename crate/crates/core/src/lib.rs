//! Image reconstruction from sparsely sampled CT and MRI measurements with
//! implicit neural representations.
//!
//! An image is represented by a coordinate network: normalized pixel
//! coordinates go through a Gaussian Fourier feature encoding and a
//! multi-layer perceptron that outputs the intensity at that point. The
//! reconstruction proceeds in three stages:
//!
//! 1. **Prior embedding** fits the network to a previous scan of the same
//!    subject ([`pipeline::embed_prior`]).
//! 2. **Measurement-constrained training** starts from the embedded network
//!    and minimizes `||A · M(grid) - y||²` through a differentiable linear
//!    forward model `A` ([`pipeline::train_reconstruction`]).
//! 3. **Inference** evaluates the trained network on the full pixel grid
//!    ([`pipeline::infer_image`]).
//!
//! Forward models live in [`forward`]: a ray-driven parallel-beam Radon
//! transform with its exact transpose and a filtered backprojection baseline,
//! and a direct nonuniform DFT on golden-angle radial spokes with a
//! density-compensated adjoint baseline. [`phantom`] generates longitudinal
//! Shepp-Logan pairs, [`metrics`] provides PSNR/SSIM, and [`io`] handles
//! image files plus the flat binary container used for measurements and
//! checkpoints.

pub mod error;
pub mod forward;
pub mod image;
pub mod io;
pub mod metrics;
pub mod mlp;
pub mod phantom;
pub mod pipeline;

pub use error::{Error, Result};
pub use forward::{
    Measurements, Modality, Operator, LinearOperator, KSpaceData, SamplingSpec, SinogramData,
};
pub use image::ImageGrid;
pub use mlp::{
    adam_step, Activation, AdamState, FourierEncoding, Layer, MlpGradients, MlpParams, Real, Tape,
};
pub use pipeline::{ReconConfig, ReconMode, Reconstruction, Representation, PriorEmbedding};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
