//! Coordinate MLP: Fourier feature encoding, a fully connected network with
//! hand-written forward/backward passes, and an Adam optimizer.

mod adam;
mod encoding;
mod network;
mod real;

pub use adam::{adam_step, AdamState};
pub use encoding::FourierEncoding;
pub use network::{init_params, Activation, Layer, MlpGradients, MlpParams, Tape, SINE_OMEGA0};
pub use real::Real;
