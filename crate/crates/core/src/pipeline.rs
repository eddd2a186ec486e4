//! Prior embedding, measurement-driven training and inference.
//!
//! A [`Representation`] is a Fourier-feature encoding plus an MLP mapping
//! encoded pixel coordinates to intensities. The prior image is first fitted
//! directly (mean squared pixel error). The fitted weights then initialize a
//! second fit against measurements only: the loss is `‖A·f(θ) - y‖²` with
//! `f(θ)` the image rendered on the pixel grid, and its gradient is pushed
//! through `A` with the operator's adjoint.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{LinearOperator, Measurements, Operator, SamplingSpec};
use crate::image::ImageGrid;
use crate::mlp::{adam_step, init_params, Activation, AdamState, FourierEncoding, MlpGradients, MlpParams, Real};

/// Hyperparameters for embedding and reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    /// Number of random Fourier frequencies `m`; the encoding is `2m` wide.
    pub fourier_features: usize,
    pub fourier_sigma: f64,
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    pub prior_iters: usize,
    /// Stop the prior fit early once its PSNR (range 1) reaches this value.
    pub prior_target_psnr: Option<f64>,
    pub recon_iters: usize,
    pub prior_lr: f64,
    pub recon_lr: f64,
    /// Learning rate for the randomly initialized ablation, which trains
    /// from scratch like the prior fit rather than fine-tuning.
    pub no_prior_lr: f64,
    /// Learning rate for the ReLU Fourier-feature baseline.
    pub grff_lr: f64,
    pub seed: u64,
    pub sampling: SamplingSpec,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self::ct_defaults()
    }
}

impl ReconConfig {
    pub fn ct_defaults() -> Self {
        Self {
            fourier_features: 256,
            fourier_sigma: 4.0,
            depth: 8,
            width: 256,
            activation: Activation::Sine,
            prior_iters: 1000,
            prior_target_psnr: None,
            recon_iters: 1000,
            prior_lr: 1e-4,
            recon_lr: 1e-5,
            no_prior_lr: 1e-4,
            grff_lr: 1e-3,
            seed: 0,
            sampling: SamplingSpec::ct(20),
        }
    }

    pub fn mri_defaults() -> Self {
        Self {
            fourier_sigma: 3.0,
            width: 512,
            sampling: SamplingSpec::mri(40),
            ..Self::ct_defaults()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fourier_features == 0 {
            return Err(Error::Config("fourier_features must be positive".into()));
        }
        if !(self.fourier_sigma.is_finite() && self.fourier_sigma > 0.0) {
            return Err(Error::Config(format!("fourier_sigma must be positive, got {}", self.fourier_sigma)));
        }
        if self.depth < 2 || self.width == 0 {
            return Err(Error::Config(format!(
                "network needs depth >= 2 and width >= 1, got depth {} width {}",
                self.depth, self.width
            )));
        }
        for (name, lr) in [
            ("prior_lr", self.prior_lr),
            ("recon_lr", self.recon_lr),
            ("no_prior_lr", self.no_prior_lr),
            ("grff_lr", self.grff_lr),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        self.sampling.validate()
    }
}

/// Which reconstruction to run from measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconMode {
    /// Start from the embedded prior.
    Nerp,
    /// Same network and encoding, randomly initialized.
    NerpNoPrior,
    /// ReLU network on Gaussian random Fourier features, random init.
    Grff,
}

impl std::fmt::Display for ReconMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReconMode::Nerp => "nerp",
            ReconMode::NerpNoPrior => "nerp_no_prior",
            ReconMode::Grff => "grff",
        })
    }
}

/// Encoding plus network weights.
#[derive(Debug, Clone)]
pub struct Representation<T> {
    pub encoding: FourierEncoding,
    pub mlp: MlpParams<T>,
}

impl<T: Real> PartialEq for Representation<T> {
    fn eq(&self, other: &Self) -> bool {
        self.encoding == other.encoding && self.mlp == other.mlp
    }
}

impl<T: Real> Representation<T> {
    /// Fresh representation for `input_dim`-dimensional coordinates. The
    /// encoding is drawn from `cfg.seed`, the weights from `cfg.seed + 1`.
    pub fn new(cfg: &ReconConfig, activation: Activation, input_dim: usize) -> Result<Self> {
        let encoding = FourierEncoding::new(cfg.fourier_features, input_dim, cfg.fourier_sigma, cfg.seed)?;
        let mlp = init_params(cfg.depth, cfg.width, encoding.output_dim(), activation, cfg.seed.wrapping_add(1))?;
        Ok(Self { encoding, mlp })
    }

    pub fn cast<U: Real>(&self) -> Representation<U> {
        Representation {
            encoding: self.encoding.clone(),
            mlp: self.mlp.cast(),
        }
    }
}

/// Pixel-center coordinates in `[0, 1]`, one row per pixel in row-major
/// order, one column per axis.
pub fn make_coordinate_grid(shape: &[usize]) -> Array2<f64> {
    let total: usize = shape.iter().product();
    let mut out = Array2::zeros((total, shape.len()));
    for (p, mut row) in out.rows_mut().into_iter().enumerate() {
        let mut rem = p;
        for d in (0..shape.len()).rev() {
            row[d] = ((rem % shape[d]) as f64 + 0.5) / shape[d] as f64;
            rem /= shape[d];
        }
    }
    out
}

fn encode_grid<T: Real>(encoding: &FourierEncoding, shape: &[usize]) -> Result<Array2<T>> {
    if shape.len() != encoding.input_dim() {
        return Err(Error::Shape(format!(
            "{}-D grid for an encoding of {}-D coordinates",
            shape.len(),
            encoding.input_dim()
        )));
    }
    encoding.encode(make_coordinate_grid(shape).view())
}

/// Renders the representation on a pixel grid.
pub fn infer_image<T: Real>(rep: &Representation<T>, shape: &[usize]) -> Result<ImageGrid> {
    let encoded = encode_grid::<T>(&rep.encoding, shape)?;
    let out = rep.mlp.predict(encoded.view())?;
    ImageGrid::new(shape.to_vec(), out.iter().map(|&v| Real::to_f64(v)).collect())
}

fn non_finite(what: &str, iteration: u64) -> Error {
    Error::NonFinite {
        what: what.to_string(),
        iteration,
    }
}

/// Result of fitting the prior image.
#[derive(Debug, Clone)]
pub struct PriorEmbedding<T> {
    pub representation: Representation<T>,
    /// PSNR (range 1) of the final rendering against the prior.
    pub fit_psnr: f64,
    /// Mean squared error per iteration.
    pub losses: Vec<f64>,
}

/// Stepwise prior fit, for callers that want to monitor or stop early.
pub struct PriorFitter<T> {
    rep: Representation<T>,
    adam: AdamState<T>,
    encoded: Array2<T>,
    target: Vec<f64>,
    shape: Vec<usize>,
    losses: Vec<f64>,
    target_psnr: Option<f64>,
    reached: bool,
}

impl<T: Real> PriorFitter<T> {
    pub fn new(prior: &ImageGrid, cfg: &ReconConfig) -> Result<Self> {
        cfg.validate()?;
        let rep = Representation::new(cfg, cfg.activation, prior.ndim())?;
        Self::from_representation(rep, prior, cfg.prior_lr)
    }

    pub fn from_representation(rep: Representation<T>, prior: &ImageGrid, lr: f64) -> Result<Self> {
        let encoded = encode_grid(&rep.encoding, prior.shape())?;
        let adam = AdamState::for_params(&rep.mlp, lr)?;
        Ok(Self {
            rep,
            adam,
            encoded,
            target: prior.values().to_vec(),
            shape: prior.shape().to_vec(),
            losses: Vec::new(),
            target_psnr: None,
            reached: false,
        })
    }

    /// Stop updating once the fit PSNR (range 1) reaches `psnr`.
    pub fn with_target_psnr(mut self, psnr: Option<f64>) -> Self {
        self.target_psnr = psnr;
        self
    }

    /// True once the current weights meet the target PSNR.
    pub fn reached_target(&self) -> bool {
        self.reached
    }

    /// One Adam step; returns the mean squared error before the update.
    /// When the weights already meet the target PSNR the update is
    /// skipped, so the fitter holds exactly the weights that met it.
    pub fn step(&mut self) -> Result<f64> {
        let iteration = self.losses.len() as u64 + 1;
        let (out, tape) = self.rep.mlp.forward(self.encoded.view())?;
        let n = self.target.len() as f64;
        let mut loss = 0.0;
        let grad: Array1<T> = out
            .iter()
            .zip(&self.target)
            .map(|(&o, &t)| {
                let r = Real::to_f64(o) - t;
                loss += r * r;
                T::from_f64(2.0 * r / n)
            })
            .collect();
        loss /= n;
        if !loss.is_finite() {
            return Err(non_finite("prior loss", iteration));
        }
        if let Some(target) = self.target_psnr {
            if loss == 0.0 || -10.0 * loss.log10() >= target {
                self.reached = true;
                return Ok(loss);
            }
        }
        let grads = self.rep.mlp.backward(&tape, grad.view())?;
        if !grads.is_finite() {
            return Err(non_finite("prior gradient", iteration));
        }
        adam_step(&mut self.rep.mlp, &grads, &mut self.adam)?;
        self.losses.push(loss);
        Ok(loss)
    }

    pub fn iterations(&self) -> usize {
        self.losses.len()
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn representation(&self) -> &Representation<T> {
        &self.rep
    }

    /// Finishes the fit, scoring the final weights against the prior.
    pub fn finish(self) -> Result<PriorEmbedding<T>> {
        let out = self.rep.mlp.predict(self.encoded.view())?;
        let mse = out
            .iter()
            .zip(&self.target)
            .map(|(&o, &t)| (Real::to_f64(o) - t).powi(2))
            .sum::<f64>()
            / self.target.len() as f64;
        let fit_psnr = if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() };
        debug_assert_eq!(out.len(), self.shape.iter().product::<usize>());
        Ok(PriorEmbedding {
            representation: self.rep,
            fit_psnr,
            losses: self.losses,
        })
    }
}

/// Fits a fresh representation to `prior` for `cfg.prior_iters` steps,
/// stopping early at `cfg.prior_target_psnr` if set.
pub fn embed_prior<T: Real>(prior: &ImageGrid, cfg: &ReconConfig) -> Result<PriorEmbedding<T>> {
    let mut fitter = PriorFitter::new(prior, cfg)?.with_target_psnr(cfg.prior_target_psnr);
    for _ in 0..cfg.prior_iters {
        fitter.step()?;
        if fitter.reached_target() {
            break;
        }
    }
    fitter.finish()
}

/// Measurement loss `Σ (A·img - y)²` and its gradient in the weights.
/// Also returns the rendered image the loss was evaluated on.
pub fn measurement_loss_and_gradient<T: Real>(
    mlp: &MlpParams<T>,
    encoded: &Array2<T>,
    operator: &Operator,
    measurements: &[f64],
) -> Result<(f64, MlpGradients<T>, Vec<f64>)> {
    let (out, tape) = mlp.forward(encoded.view())?;
    let image: Vec<f64> = out.iter().map(|&v| Real::to_f64(v)).collect();
    let mut residual = operator.apply(&image)?;
    if residual.len() != measurements.len() {
        return Err(Error::Shape(format!(
            "operator yields {} measurements, data has {}",
            residual.len(),
            measurements.len()
        )));
    }
    let mut loss = 0.0;
    for (r, &y) in residual.iter_mut().zip(measurements) {
        *r -= y;
        loss += *r * *r;
    }
    let back = operator.adjoint(&residual)?;
    let grad: Array1<T> = back.iter().map(|&g| T::from_f64(2.0 * g)).collect();
    let grads = mlp.backward(&tape, grad.view())?;
    Ok((loss, grads, image))
}

/// Stepwise measurement-domain training.
pub struct ReconTrainer<T> {
    rep: Representation<T>,
    adam: AdamState<T>,
    encoded: Array2<T>,
    operator: Operator,
    measurements: Vec<f64>,
    size: usize,
    losses: Vec<f64>,
    last_image: Vec<f64>,
}

impl<T: Real> ReconTrainer<T> {
    pub fn new(init: Representation<T>, operator: Operator, measurements: Vec<f64>, lr: f64) -> Result<Self> {
        let size = operator.image_size();
        if measurements.len() != operator.measurement_len() {
            return Err(Error::Shape(format!(
                "operator expects {} measurements, got {}",
                operator.measurement_len(),
                measurements.len()
            )));
        }
        let encoded = encode_grid(&init.encoding, &[size, size])?;
        let adam = AdamState::for_params(&init.mlp, lr)?;
        Ok(Self {
            rep: init,
            adam,
            encoded,
            operator,
            measurements,
            size,
            losses: Vec::new(),
            last_image: Vec::new(),
        })
    }

    /// One Adam step; returns the loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let iteration = self.losses.len() as u64 + 1;
        let (loss, grads, image) =
            measurement_loss_and_gradient(&self.rep.mlp, &self.encoded, &self.operator, &self.measurements)?;
        if !loss.is_finite() {
            return Err(non_finite("measurement loss", iteration));
        }
        if !grads.is_finite() {
            return Err(non_finite("measurement gradient", iteration));
        }
        adam_step(&mut self.rep.mlp, &grads, &mut self.adam)?;
        self.losses.push(loss);
        self.last_image = image;
        Ok(loss)
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn representation(&self) -> &Representation<T> {
        &self.rep
    }

    /// Image rendered by the weights in effect before the latest step.
    pub fn last_image(&self) -> &[f64] {
        &self.last_image
    }

    /// Renders the current weights.
    pub fn current_image(&self) -> Result<ImageGrid> {
        let out = self.rep.mlp.predict(self.encoded.view())?;
        ImageGrid::new(vec![self.size, self.size], out.iter().map(|&v| Real::to_f64(v)).collect())
    }

    pub fn into_representation(self) -> Representation<T> {
        self.rep
    }
}

/// A trained representation with its loss history.
#[derive(Debug, Clone)]
pub struct TrainedRepresentation<T> {
    pub representation: Representation<T>,
    pub losses: Vec<f64>,
}

/// Trains `init` against measurements for `cfg.recon_iters` steps at
/// `cfg.recon_lr`.
pub fn train_reconstruction<T: Real>(
    init: &Representation<T>,
    measurements: &Measurements,
    operator: &Operator,
    cfg: &ReconConfig,
) -> Result<TrainedRepresentation<T>> {
    train_with(init.clone(), measurements, operator, cfg.recon_iters, cfg.recon_lr)
}

fn train_with<T: Real>(
    init: Representation<T>,
    measurements: &Measurements,
    operator: &Operator,
    iters: usize,
    lr: f64,
) -> Result<TrainedRepresentation<T>> {
    if operator.modality() != measurements.modality() || operator.image_size() != measurements.image_size() {
        return Err(Error::Shape(format!(
            "{} operator on a {} grid cannot explain {} data on a {} grid",
            operator.modality(),
            operator.image_size(),
            measurements.modality(),
            measurements.image_size()
        )));
    }
    let mut trainer = ReconTrainer::new(init, operator.clone(), measurements.to_vector(), lr)?;
    for _ in 0..iters {
        trainer.step()?;
    }
    Ok(TrainedRepresentation {
        losses: trainer.losses.clone(),
        representation: trainer.into_representation(),
    })
}

/// Output of [`reconstruct`].
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: ImageGrid,
    pub losses: Vec<f64>,
    pub iterations: usize,
}

/// Reconstructs an image from measurements. `Nerp` requires a prior
/// embedding and trains at `cfg.recon_lr`; the other modes start from
/// random weights seeded by `cfg.seed`. `NerpNoPrior` trains at
/// `cfg.no_prior_lr`, `Grff` always uses ReLU and `cfg.grff_lr`.
pub fn reconstruct<T: Real>(
    prior: Option<&Representation<T>>,
    measurements: &Measurements,
    cfg: &ReconConfig,
    mode: ReconMode,
) -> Result<Reconstruction> {
    cfg.validate()?;
    let (init, lr) = match mode {
        ReconMode::Nerp => {
            let rep = prior.ok_or_else(|| Error::Config("nerp mode needs a prior embedding".into()))?;
            (rep.clone(), cfg.recon_lr)
        }
        ReconMode::NerpNoPrior => (Representation::new(cfg, cfg.activation, 2)?, cfg.no_prior_lr),
        ReconMode::Grff => (Representation::new(cfg, Activation::Relu, 2)?, cfg.grff_lr),
    };
    let operator = measurements.operator()?;
    let trained = train_with(init, measurements, &operator, cfg.recon_iters, lr)?;
    let n = measurements.image_size();
    let image = infer_image(&trained.representation, &[n, n])?;
    Ok(Reconstruction {
        image,
        iterations: trained.losses.len(),
        losses: trained.losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{simulate, ParallelBeam};

    fn tiny_cfg() -> ReconConfig {
        ReconConfig {
            fourier_features: 8,
            fourier_sigma: 2.0,
            depth: 3,
            width: 16,
            prior_iters: 5,
            recon_iters: 3,
            ..ReconConfig::ct_defaults()
        }
    }

    #[test]
    fn coordinate_grid_is_row_major_pixel_centers() {
        let g = make_coordinate_grid(&[2, 4]);
        assert_eq!(g.nrows(), 8);
        assert_eq!(g.row(0).to_vec(), vec![0.25, 0.125]);
        assert_eq!(g.row(1).to_vec(), vec![0.25, 0.375]);
        assert_eq!(g.row(7).to_vec(), vec![0.75, 0.875]);
        assert!(g.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn defaults_validate() {
        ReconConfig::ct_defaults().validate().unwrap();
        ReconConfig::mri_defaults().validate().unwrap();
        let mut bad = tiny_cfg();
        bad.recon_lr = 0.0;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let err = serde_json::from_str::<ReconConfig>(r#"{"depht": 4}"#).unwrap_err();
        assert!(err.to_string().contains("depht"));
    }

    #[test]
    fn nerp_requires_a_prior() {
        let img = ImageGrid::filled(vec![8, 8], 0.5).unwrap();
        let y = simulate(&img, &SamplingSpec::ct(4)).unwrap();
        let err = reconstruct::<f64>(None, &y, &tiny_cfg(), ReconMode::Nerp).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn prior_loss_decreases() {
        let img = ImageGrid::from_fn_2d(8, 8, |i, j| ((i + j) % 4) as f64 / 4.0).unwrap();
        let mut cfg = tiny_cfg();
        cfg.prior_lr = 1e-3;
        cfg.prior_iters = 200;
        let emb = embed_prior::<f64>(&img, &cfg).unwrap();
        assert_eq!(emb.losses.len(), 200);
        assert!(emb.losses[199] < 0.1 * emb.losses[0]);
        assert!(emb.fit_psnr > -10.0 * emb.losses[0].log10());
    }

    #[test]
    fn early_stop_at_target() {
        let img = ImageGrid::filled(vec![8, 8], 0.3).unwrap();
        let mut cfg = tiny_cfg();
        cfg.prior_lr = 1e-3;
        cfg.prior_iters = 5000;
        cfg.prior_target_psnr = Some(25.0);
        let emb = embed_prior::<f64>(&img, &cfg).unwrap();
        assert!(emb.losses.len() < 5000);
        // the returned weights are the ones that met the target
        assert!(emb.fit_psnr >= 25.0, "{}", emb.fit_psnr);
        assert!(-10.0 * emb.losses.last().unwrap().log10() < 25.0);
    }

    #[test]
    fn overflowing_loss_aborts_with_iteration() {
        let cfg = tiny_cfg();
        let rep = Representation::<f64>::new(&cfg, Activation::Sine, 2).unwrap();
        let op = Operator::Radon(ParallelBeam::uniform(8, 3, Some(12), 1.0).unwrap());
        let y = vec![1e300; op.measurement_len()];
        let mut trainer = ReconTrainer::new(rep, op, y, 1e-5).unwrap();
        match trainer.step() {
            Err(Error::NonFinite { iteration, .. }) => assert_eq!(iteration, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_measurements_are_rejected() {
        let cfg = tiny_cfg();
        let rep = Representation::<f64>::new(&cfg, Activation::Sine, 2).unwrap();
        let op = Operator::Radon(ParallelBeam::uniform(8, 3, Some(12), 1.0).unwrap());
        assert!(matches!(ReconTrainer::new(rep.clone(), op.clone(), vec![0.0; 5], 1e-5), Err(Error::Shape(_))));

        let y = simulate(&ImageGrid::zeros(vec![16, 16]).unwrap(), &SamplingSpec::ct(3)).unwrap();
        assert!(matches!(train_reconstruction(&rep, &y, &op, &cfg), Err(Error::Shape(_))));
    }

    #[test]
    fn grff_mode_uses_relu() {
        let img = ImageGrid::filled(vec![8, 8], 0.5).unwrap();
        let y = simulate(&img, &SamplingSpec::mri(4)).unwrap();
        let out = reconstruct::<f64>(None, &y, &tiny_cfg(), ReconMode::Grff).unwrap();
        assert_eq!(out.iterations, 3);
        assert_eq!(out.image.shape(), &[8, 8]);
    }
}
