use super::{MlpGradients, MlpParams, Real};
use crate::error::{Error, Result};

/// Adam moments and hyperparameters.
///
/// Moments are kept per parameter tensor as flat buffers, so the same state
/// type can drive any list of slices ([`AdamState::update`]) as well as a
/// whole network ([`adam_step`]).
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(tensor_lens: &[usize], lr: f64) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Self {
            first_moment: tensor_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            second_moment: tensor_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        })
    }

    pub fn for_params(params: &MlpParams<T>, lr: f64) -> Result<Self> {
        let lens: Vec<usize> = params
            .layers()
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len()])
            .collect();
        Self::new(&lens, lr)
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Result<Self> {
        if !(0.0 < beta1 && beta1 < 1.0 && 0.0 < beta2 && beta2 < 1.0) {
            return Err(Error::Config(format!("betas must lie in (0, 1), got {beta1}, {beta2}")));
        }
        self.beta1 = beta1;
        self.beta2 = beta2;
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// One bias-corrected Adam update over a list of parameter tensors.
    ///
    /// Nothing is modified if any gradient entry is non-finite.
    pub fn update(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.first_moment).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Shape(format!(
                    "tensor {i}: optimizer size {}, params {}, grads {}",
                    m.len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite {
                what: "gradient".into(),
                iteration: self.step + 1,
            });
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::from_f64(1.0 - self.beta1.powi(t));
        let bc2 = T::from_f64(1.0 - self.beta2.powi(t));
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (lr, eps) = (T::from_f64(self.lr), T::from_f64(self.epsilon));
        let one = T::one();

        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for (((pk, &gk), mk), vk) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mk = b1 * *mk + (one - b1) * gk;
                *vk = b2 * *vk + (one - b2) * gk * gk;
                let m_hat = *mk / bc1;
                let v_hat = *vk / bc2;
                *pk = *pk - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step to a network in place.
pub fn adam_step<T: Real>(
    params: &mut MlpParams<T>,
    grads: &MlpGradients<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    if grads.layers.len() != params.depth() {
        return Err(Error::Shape(format!(
            "{} gradient layers for a depth-{} network",
            grads.layers.len(),
            params.depth()
        )));
    }
    let grad_slices: Vec<&[T]> = grads
        .layers
        .iter()
        .flat_map(|l| [l.weight.as_slice().expect("standard layout"), l.bias.as_slice().expect("standard layout")])
        .collect();
    let mut param_slices: Vec<&mut [T]> = params
        .layers_mut()
        .iter_mut()
        .flat_map(|l| {
            [
                l.weight.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
        .collect();
    state.update(&mut param_slices, &grad_slices)?;
    params.refresh_stamp();
    Ok(())
}
