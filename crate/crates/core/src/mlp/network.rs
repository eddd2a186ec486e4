use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

/// Frequency multiplier of sine layers: a hidden unit computes
/// `sin(omega0 · (W a + b))`.
pub const SINE_OMEGA0: f64 = 30.0;

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sine,
    Relu,
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Sine => "sine",
            Activation::Relu => "relu",
        })
    }
}

/// One fully connected layer; `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Layer<T> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Weights of a coordinate MLP. Every layer but the last is followed by the
/// activation; the last layer is linear with a single output.
#[derive(Debug, Clone)]
pub struct MlpParams<T> {
    layers: Vec<Layer<T>>,
    activation: Activation,
    omega0: f64,
    // identifies the parameter values a tape was recorded against
    stamp: u64,
}

impl<T: Real> PartialEq for MlpParams<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.activation == other.activation && self.omega0 == other.omega0
    }
}

/// Activation cache recorded by [`MlpParams::forward`].
#[derive(Debug, Clone)]
pub struct Tape<T> {
    stamp: u64,
    /// Input to each layer (`inputs[0]` is the encoded batch).
    inputs: Vec<Array2<T>>,
    /// Activation derivative at each hidden layer's pre-activation.
    derivs: Vec<Array2<T>>,
}

impl<T> Tape<T> {
    pub fn batch_len(&self) -> usize {
        self.inputs.first().map_or(0, |a| a.nrows())
    }
}

/// Gradients with the same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> MlpGradients<T> {
    pub fn zeros_like(params: &MlpParams<T>) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.out_dim(), l.in_dim()))
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        flatten_layers(&self.layers)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

fn flatten_layers<T: Real>(layers: &[Layer<T>]) -> Vec<T> {
    layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
        .collect()
}

/// Builds a freshly initialized network.
///
/// Sine networks use the periodic-activation recipe: the first layer's
/// weights are uniform in `±1/fan_in`, later layers in
/// `±sqrt(6/fan_in)/omega0` with `omega0 = 30`. ReLU networks use
/// `±sqrt(6/fan_in)` everywhere. Biases are uniform in `±1/sqrt(fan_in)`.
pub fn init_params<T: Real>(
    depth: usize,
    width: usize,
    input_dim: usize,
    activation: Activation,
    seed: u64,
) -> Result<MlpParams<T>> {
    if depth < 2 || width == 0 || input_dim == 0 {
        return Err(Error::InvalidDimensions(format!(
            "MLP needs depth >= 2, width >= 1, input_dim >= 1; got depth={depth}, width={width}, input_dim={input_dim}"
        )));
    }
    let omega0 = match activation {
        Activation::Sine => SINE_OMEGA0,
        Activation::Relu => 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let fan_in = if l == 0 { input_dim } else { width };
        let fan_out = if l + 1 == depth { 1 } else { width };
        let limit = match (activation, l) {
            (Activation::Sine, 0) => 1.0 / fan_in as f64,
            (Activation::Sine, _) => (6.0 / fan_in as f64).sqrt() / omega0,
            (Activation::Relu, _) => (6.0 / fan_in as f64).sqrt(),
        };
        let bias_limit = 1.0 / (fan_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || {
            T::from_f64(symmetric(&mut rng, limit))
        });
        let bias = Array1::from_shape_simple_fn(fan_out, || T::from_f64(symmetric(&mut rng, bias_limit)));
        layers.push(Layer { weight, bias });
    }
    Ok(MlpParams {
        layers,
        activation,
        omega0,
        stamp: fresh_stamp(),
    })
}

fn symmetric(rng: &mut ChaCha8Rng, limit: f64) -> f64 {
    (rng.random::<f64>() * 2.0 - 1.0) * limit
}

impl<T: Real> MlpParams<T> {
    /// Assembles a network from explicit layers, checking the layer chain.
    pub fn from_layers(layers: Vec<Layer<T>>, activation: Activation, omega0: f64) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidDimensions(format!(
                "MLP needs at least 2 layers, got {}",
                layers.len()
            )));
        }
        if !(omega0.is_finite() && omega0 > 0.0) {
            return Err(Error::Config(format!("omega0 must be positive, got {omega0}")));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() || l.in_dim() == 0 || l.out_dim() == 0 {
                return Err(Error::Shape(format!("layer {i} has inconsistent weight/bias shapes")));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    l.in_dim(),
                    i - 1,
                    layers[i - 1].out_dim()
                )));
            }
        }
        if layers.last().map(Layer::out_dim) != Some(1) {
            return Err(Error::Shape("final layer must have one output".into()));
        }
        let params = Self {
            layers,
            activation,
            omega0,
            stamp: fresh_stamp(),
        };
        if !params.is_finite() {
            return Err(Error::Input("non-finite parameter".into()));
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Mutable access to the layers. Tapes recorded before this call are
    /// invalidated.
    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.stamp = fresh_stamp();
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        self.layers[0].out_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// All parameters in layer order, each layer's weights (row-major) then bias.
    pub fn flatten(&self) -> Vec<T> {
        flatten_layers(&self.layers)
    }

    /// Overwrites all parameters from a flat vector in [`flatten`](Self::flatten) order.
    pub fn assign_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_parameters(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for l in self.layers_mut() {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    /// Converts to another precision.
    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                weight: l.weight.mapv(|v| U::from_f64(v.to_f64())),
                bias: l.bias.mapv(|v| U::from_f64(v.to_f64())),
            })
            .collect();
        MlpParams {
            layers,
            activation: self.activation,
            omega0: self.omega0,
            stamp: fresh_stamp(),
        }
    }

    pub(crate) fn refresh_stamp(&mut self) {
        self.stamp = fresh_stamp();
    }

    fn check_input(&self, encoded: &ArrayView2<T>) -> Result<()> {
        if encoded.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "encoded batch has {} features, first layer expects {}",
                encoded.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Evaluates the network and records what backward needs.
    pub fn forward(&self, encoded: ArrayView2<T>) -> Result<(Array1<T>, Tape<T>)> {
        self.check_input(&encoded)?;
        let depth = self.depth();
        let mut inputs = Vec::with_capacity(depth);
        let mut derivs = Vec::with_capacity(depth - 1);
        let mut act = encoded.to_owned();
        for layer in &self.layers[..depth - 1] {
            let mut z = affine(&act, layer);
            derivs.push(self.activate(&mut z, true));
            inputs.push(std::mem::replace(&mut act, z));
        }
        let out = affine(&act, &self.layers[depth - 1]).remove_axis(Axis(1));
        inputs.push(act);
        Ok((
            out,
            Tape {
                stamp: self.stamp,
                inputs,
                derivs,
            },
        ))
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, encoded: ArrayView2<T>) -> Result<Array1<T>> {
        self.check_input(&encoded)?;
        let depth = self.depth();
        let mut act = affine(&encoded, &self.layers[0]);
        self.activate(&mut act, false);
        for layer in &self.layers[1..depth - 1] {
            act = affine(&act, layer);
            self.activate(&mut act, false);
        }
        Ok(affine(&act, &self.layers[depth - 1]).remove_axis(Axis(1)))
    }

    /// Applies the activation in place; optionally returns its derivative.
    fn activate(&self, z: &mut Array2<T>, want_deriv: bool) -> Array2<T> {
        match self.activation {
            Activation::Sine => {
                let w = T::from_f64(self.omega0);
                if want_deriv {
                    let mut d = Array2::<T>::zeros(z.raw_dim());
                    Zip::from(&mut *z).and(&mut d).for_each(|zv, dv| {
                        let (s, c) = (w * *zv).sin_cos();
                        *zv = s;
                        *dv = w * c;
                    });
                    d
                } else {
                    z.mapv_inplace(|v| (w * v).sin());
                    Array2::zeros((0, 0))
                }
            }
            Activation::Relu => {
                let d = if want_deriv {
                    z.mapv(|v| if v > T::zero() { T::one() } else { T::zero() })
                } else {
                    Array2::zeros((0, 0))
                };
                z.mapv_inplace(|v| v.max(T::zero()));
                d
            }
        }
    }

    /// Gradient of `Σ_i output_grads[i] · output[i]` with respect to every
    /// weight and bias, given the tape of the forward pass that produced
    /// `output`.
    pub fn backward(&self, tape: &Tape<T>, output_grads: ArrayView1<T>) -> Result<MlpGradients<T>> {
        if tape.stamp != self.stamp || tape.inputs.len() != self.depth() {
            return Err(Error::StaleTape(
                "tape was recorded with different parameter values".into(),
            ));
        }
        if output_grads.len() != tape.batch_len() {
            return Err(Error::Shape(format!(
                "{} output gradients for a batch of {}",
                output_grads.len(),
                tape.batch_len()
            )));
        }
        let depth = self.depth();
        let mut grads = Vec::with_capacity(depth);
        let mut delta = output_grads.to_owned().insert_axis(Axis(1));
        for l in (0..depth).rev() {
            let weight = delta.t().dot(&tape.inputs[l]);
            let bias = delta.sum_axis(Axis(0));
            grads.push(Layer { weight, bias });
            if l > 0 {
                let mut upstream = delta.dot(&self.layers[l].weight);
                upstream.zip_mut_with(&tape.derivs[l - 1], |a, &d| *a = *a * d);
                delta = upstream;
            }
        }
        grads.reverse();
        Ok(MlpGradients { layers: grads })
    }
}

fn affine<T: Real>(input: &impl AsView<T>, layer: &Layer<T>) -> Array2<T> {
    let mut z = input.view2().dot(&layer.weight.t());
    for mut row in z.rows_mut() {
        row.zip_mut_with(&layer.bias, |a, &b| *a = *a + b);
    }
    z
}

trait AsView<T> {
    fn view2(&self) -> ArrayView2<'_, T>;
}

impl<T> AsView<T> for Array2<T> {
    fn view2(&self) -> ArrayView2<'_, T> {
        self.view()
    }
}

impl<T> AsView<T> for ArrayView2<'_, T> {
    fn view2(&self) -> ArrayView2<'_, T> {
        self.view()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand::Rng;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array::from_shape_simple_fn((rows, cols), || rng.random::<f64>() * 2.0 - 1.0)
    }

    // Independent evaluation: plain nested loops per sample.
    fn scalar_forward(params: &MlpParams<f64>, x: &[f64]) -> f64 {
        let mut act = x.to_vec();
        let depth = params.depth();
        for (l, layer) in params.layers().iter().enumerate() {
            let mut next = vec![0.0; layer.out_dim()];
            for (o, slot) in next.iter_mut().enumerate() {
                let mut s = layer.bias[o];
                for (i, a) in act.iter().enumerate() {
                    s += layer.weight[[o, i]] * a;
                }
                *slot = if l + 1 == depth {
                    s
                } else {
                    match params.activation() {
                        Activation::Sine => (params.omega0() * s).sin(),
                        Activation::Relu => s.max(0.0),
                    }
                };
            }
            act = next;
        }
        act[0]
    }

    #[test]
    fn init_shapes_and_determinism() {
        let p: MlpParams<f64> = init_params(8, 256, 512, Activation::Sine, 3).unwrap();
        assert_eq!(p.depth(), 8);
        assert_eq!(p.layers()[0].weight.dim(), (256, 512));
        assert_eq!(p.layers()[7].weight.dim(), (1, 256));
        let q: MlpParams<f64> = init_params(8, 256, 512, Activation::Sine, 3).unwrap();
        assert_eq!(p.flatten(), q.flatten());

        let small: MlpParams<f32> = init_params(2, 5, 7, Activation::Relu, 0).unwrap();
        assert_eq!(small.layers()[0].weight.dim(), (5, 7));
        assert_eq!(small.layers()[1].weight.dim(), (1, 5));
    }

    #[test]
    fn init_ranges() {
        let p: MlpParams<f64> = init_params(3, 64, 32, Activation::Sine, 1).unwrap();
        let first = p.layers()[0].weight.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(first <= 1.0 / 32.0 && first > 0.9 / 32.0);
        let hidden = p.layers()[1].weight.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let limit = (6.0f64 / 64.0).sqrt() / 30.0;
        assert!(hidden <= limit && hidden > 0.9 * limit);

        let r: MlpParams<f64> = init_params(3, 64, 32, Activation::Relu, 1).unwrap();
        let first = r.layers()[0].weight.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(first <= (6.0f64 / 32.0).sqrt());
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(init_params::<f64>(1, 4, 4, Activation::Sine, 0).is_err());
        assert!(init_params::<f64>(3, 0, 4, Activation::Sine, 0).is_err());
        assert!(init_params::<f64>(3, 4, 0, Activation::Sine, 0).is_err());
    }

    #[test]
    fn constant_network_outputs_bias() {
        let mut p: MlpParams<f64> = init_params(3, 4, 6, Activation::Sine, 0).unwrap();
        for l in p.layers_mut() {
            l.weight.fill(0.0);
        }
        p.layers_mut()[2].bias[0] = 0.37;
        let out = p.predict(random_batch(5, 6, 1).view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.37));
    }

    #[test]
    fn empty_batch() {
        let p: MlpParams<f64> = init_params(3, 4, 6, Activation::Sine, 0).unwrap();
        let (out, tape) = p.forward(Array2::zeros((0, 6)).view()).unwrap();
        assert!(out.is_empty());
        let g = p.backward(&tape, out.view()).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let p: MlpParams<f64> = init_params(3, 4, 6, Activation::Sine, 0).unwrap();
        assert!(matches!(p.forward(Array2::zeros((2, 5)).view()), Err(Error::Shape(_))));
    }

    #[test]
    fn batched_forward_matches_scalar_loop() {
        for act in [Activation::Sine, Activation::Relu] {
            let p: MlpParams<f64> = init_params(4, 12, 10, act, 9).unwrap();
            let x = random_batch(16, 10, 2);
            let (out, _) = p.forward(x.view()).unwrap();
            let pred = p.predict(x.view()).unwrap();
            for i in 0..16 {
                let expect = scalar_forward(&p, x.row(i).as_slice().unwrap());
                let tol = 1e-10 * expect.abs().max(1e-3);
                assert!((out[i] - expect).abs() <= tol, "{act}: {} vs {}", out[i], expect);
                assert_eq!(out[i], pred[i]);
            }
        }
    }

    fn weighted_output(p: &MlpParams<f64>, x: &Array2<f64>, w: &Array1<f64>) -> f64 {
        p.predict(x.view()).unwrap().dot(w)
    }

    #[test]
    fn backward_matches_central_differences() {
        for act in [Activation::Sine, Activation::Relu] {
            let p: MlpParams<f64> = init_params(2, 3, 4, act, 5).unwrap();
            let x = random_batch(6, 4, 11);
            let w = Array1::from(vec![0.3, -1.2, 0.8, 0.5, -0.4, 1.1]);
            let (_, tape) = p.forward(x.view()).unwrap();
            let analytic = p.backward(&tape, w.view()).unwrap().flatten();
            let base = p.flatten();
            let h = 1e-4;
            let mut max_rel = 0.0f64;
            for k in 0..base.len() {
                let mut probe = p.clone();
                let mut v = base.clone();
                v[k] += h;
                probe.assign_flat(&v).unwrap();
                let plus = weighted_output(&probe, &x, &w);
                v[k] -= 2.0 * h;
                probe.assign_flat(&v).unwrap();
                let minus = weighted_output(&probe, &x, &w);
                let fd = (plus - minus) / (2.0 * h);
                let rel = (analytic[k] - fd).abs() / fd.abs().max(analytic[k].abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
            assert!(max_rel < 1e-4, "{act}: max relative error {max_rel}");
        }
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let p: MlpParams<f64> = init_params(3, 5, 4, Activation::Sine, 2).unwrap();
        let x = random_batch(7, 4, 3);
        let (_, tape) = p.forward(x.view()).unwrap();
        let g = Array1::from_shape_fn(7, |i| i as f64 - 3.0);
        let zero = p.backward(&tape, Array1::zeros(7).view()).unwrap();
        assert!(zero.flatten().iter().all(|&v| v == 0.0));
        let once = p.backward(&tape, g.view()).unwrap().flatten();
        let twice = p.backward(&tape, (&g * 2.0).view()).unwrap().flatten();
        for (a, b) in once.iter().zip(&twice) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut p: MlpParams<f64> = init_params(2, 3, 4, Activation::Sine, 5).unwrap();
        let x = random_batch(2, 4, 1);
        let (out, tape) = p.forward(x.view()).unwrap();
        p.layers_mut()[0].bias[0] += 1.0;
        assert!(matches!(p.backward(&tape, out.view()), Err(Error::StaleTape(_))));

        let other: MlpParams<f64> = init_params(2, 3, 4, Activation::Sine, 5).unwrap();
        let (_, tape) = other.forward(x.view()).unwrap();
        let fresh: MlpParams<f64> = init_params(2, 3, 4, Activation::Sine, 6).unwrap();
        assert!(fresh.backward(&tape, out.view()).is_err());
    }

    #[test]
    fn f32_cast_agrees_with_f64() {
        let p: MlpParams<f64> = init_params(4, 16, 8, Activation::Sine, 4).unwrap();
        let q: MlpParams<f32> = p.cast();
        let x = random_batch(10, 8, 5);
        let a = p.predict(x.view()).unwrap();
        let b = q.predict(x.mapv(|v| v as f32).view()).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - *v as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn from_layers_checks_chain() {
        let bad = vec![Layer::<f64>::zeros(3, 2), Layer::zeros(1, 4)];
        assert!(MlpParams::from_layers(bad, Activation::Sine, 30.0).is_err());
        let no_scalar_out = vec![Layer::<f64>::zeros(3, 2), Layer::zeros(2, 3)];
        assert!(MlpParams::from_layers(no_scalar_out, Activation::Sine, 30.0).is_err());
        let ok = vec![Layer::<f64>::zeros(3, 2), Layer::zeros(1, 3)];
        assert!(MlpParams::from_layers(ok, Activation::Relu, 1.0).is_ok());
    }
}
