use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Activation, NnError};

/// One dense layer: `y = act(W x + b)` with `W` stored `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Weight initialisation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    /// Std of additive Gaussian noise applied to every parameter after the
    /// `N(0, 1/fan_in)` draw. Zero disables it.
    pub param_noise_std: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { param_noise_std: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Values cached by [`Mlp::forward_tape`] for a later [`Mlp::backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl Tape {
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }

    /// Pre-activations of layer `i` for the recorded batch.
    pub fn pre_activation(&self, i: usize) -> &Array2<f64> {
        &self.pre_activations[i]
    }

    pub fn num_layers(&self) -> usize {
        self.pre_activations.len()
    }
}

/// Parameter gradients, plus the gradient with respect to the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|&g| g == 0.0))
            && self.biases.iter().all(|b| b.iter().all(|&g| g == 0.0))
    }

    pub fn norm(&self) -> f64 {
        let w: f64 = self.weights.iter().flat_map(|w| w.iter()).map(|g| g * g).sum();
        let b: f64 = self.biases.iter().flat_map(|b| b.iter()).map(|g| g * g).sum();
        (w + b).sqrt()
    }
}

impl Mlp {
    /// Builds a network with `layer_dims = [in, h1, ..., out]`.
    ///
    /// `hidden` holds one activation per hidden layer; the output layer is
    /// always [`Activation::Identity`].
    pub fn new<R: Rng + ?Sized>(
        layer_dims: &[usize],
        hidden: &[Activation],
        init: InitConfig,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if layer_dims.len() < 2 {
            return Err(NnError::Architecture(
                "need at least input and output dimensions".into(),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(NnError::Architecture("layer dimensions must be positive".into()));
        }
        if hidden.len() != layer_dims.len() - 2 {
            return Err(NnError::Architecture(format!(
                "{} hidden activations for {} hidden layers",
                hidden.len(),
                layer_dims.len() - 2
            )));
        }
        let layers = layer_dims
            .windows(2)
            .enumerate()
            .map(|(i, dims)| {
                let (fan_in, fan_out) = (dims[0], dims[1]);
                let std = 1.0 / (fan_in as f64).sqrt();
                let mut weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    let z: f64 = StandardNormal.sample(rng);
                    z * std
                });
                let mut bias = Array1::zeros(fan_out);
                if init.param_noise_std > 0.0 {
                    let noise = init.param_noise_std;
                    weights.mapv_inplace(|w| {
                        let z: f64 = StandardNormal.sample(rng);
                        w + noise * z
                    });
                    bias.mapv_inplace(|b| {
                        let z: f64 = StandardNormal.sample(rng);
                        b + noise * z
                    });
                }
                let activation = hidden.get(i).copied().unwrap_or(Activation::Identity);
                Layer {
                    weights,
                    bias,
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Assembles a network from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Architecture("no layers".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(NnError::Architecture(format!(
                    "layer {i}: bias length {} != output dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(NnError::Architecture(format!("layer {i} has an empty dimension")));
            }
            if i > 0 && layers[i - 1].out_dim() != layer.in_dim() {
                return Err(NnError::Architecture(format!(
                    "layer {i}: input dim {} does not chain from {}",
                    layer.in_dim(),
                    layers[i - 1].out_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("1-row view");
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a batch without recording intermediates.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weights.t());
            z += &layer.bias;
            let act = layer.activation;
            if act != Activation::Identity {
                z.mapv_inplace(|v| act.apply(v));
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that records what [`Mlp::backward`] needs.
    pub fn forward_tape(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Tape), NnError> {
        self.check_input(&x)?;
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weights.t());
            z += &layer.bias;
            let act = layer.activation;
            let out = if act == Activation::Identity {
                z.clone()
            } else {
                z.mapv(|v| act.apply(v))
            };
            tape.inputs.push(h);
            tape.pre_activations.push(z);
            h = out;
        }
        Ok((h, tape))
    }

    /// Backpropagates `grad_out` (d loss / d output, same shape as the
    /// recorded output) through the recorded pass.
    pub fn backward(&self, tape: &Tape, grad_out: ArrayView2<f64>) -> Result<Gradients, NnError> {
        if tape.is_empty() || tape.inputs.len() != self.layers.len() {
            return Err(NnError::MissingForward);
        }
        for (layer, (input, z)) in self.layers.iter().zip(tape.inputs.iter().zip(&tape.pre_activations)) {
            if input.ncols() != layer.in_dim() || z.ncols() != layer.out_dim() {
                return Err(NnError::MissingForward);
            }
        }
        let expected = (tape.batch_size(), self.output_dim());
        if grad_out.dim() != expected {
            return Err(NnError::GradShape {
                expected,
                got: grad_out.dim(),
            });
        }

        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut upstream = grad_out.to_owned();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let act = layer.activation;
            let mut dz = upstream;
            if act != Activation::Identity {
                dz.zip_mut_with(&tape.pre_activations[i], |g, &z| *g *= act.derivative(z));
            }
            weights.push(dz.t().dot(&tape.inputs[i]).as_standard_layout().into_owned());
            biases.push(dz.sum_axis(Axis(0)));
            upstream = dz.dot(&layer.weights);
        }
        weights.reverse();
        biases.reverse();
        Ok(Gradients {
            weights,
            biases,
            input: upstream,
        })
    }

    /// `self = (1 - tau) * self + tau * online`, parameter-wise.
    pub fn polyak_from(&mut self, online: &Mlp, tau: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.weights
                .zip_mut_with(&o.weights, |t, &o| *t = (1.0 - tau) * *t + tau * o);
            t.bias.zip_mut_with(&o.bias, |t, &o| *t = (1.0 - tau) * *t + tau * o);
        }
    }

    /// Euclidean distance between two same-shaped parameter sets.
    pub fn param_distance(&self, other: &Mlp) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                let w: f64 = a.weights.iter().zip(&b.weights).map(|(x, y)| (x - y).powi(2)).sum();
                let c: f64 = a.bias.iter().zip(&b.bias).map(|(x, y)| (x - y).powi(2)).sum();
                w + c
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Exact equality on the bit patterns of every parameter.
    pub fn bitwise_eq(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.activation == b.activation
                    && a.weights.dim() == b.weights.dim()
                    && a.bias.len() == b.bias.len()
                    && a.weights
                        .iter()
                        .zip(&b.weights)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
                    && a.bias.iter().zip(&b.bias).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::InputShape {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteInput);
        }
        Ok(())
    }
}

/// Serialised form of an [`Mlp`]: dims, activation tags, row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<&Mlp> for MlpCheckpoint {
    fn from(net: &Mlp) -> Self {
        Self {
            layer_dims: net.layer_dims(),
            activations: net.activations(),
            weights: net.layers.iter().map(|l| l.weights.iter().copied().collect()).collect(),
            biases: net.layers.iter().map(|l| l.bias.to_vec()).collect(),
        }
    }
}

impl From<Mlp> for MlpCheckpoint {
    fn from(net: Mlp) -> Self {
        (&net).into()
    }
}

impl TryFrom<MlpCheckpoint> for Mlp {
    type Error = NnError;

    fn try_from(ck: MlpCheckpoint) -> Result<Self, NnError> {
        let n = ck.layer_dims.len().saturating_sub(1);
        if n == 0 || ck.activations.len() != n || ck.weights.len() != n || ck.biases.len() != n {
            return Err(NnError::Architecture("checkpoint layer count mismatch".into()));
        }
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (ck.layer_dims[i], ck.layer_dims[i + 1]);
                let weights = Array2::from_shape_vec((fan_out, fan_in), ck.weights[i].clone())
                    .map_err(|e| NnError::Architecture(format!("layer {i} weights: {e}")))?;
                Ok(Layer {
                    weights,
                    bias: Array1::from(ck.biases[i].clone()),
                    activation: ck.activations[i],
                })
            })
            .collect::<Result<Vec<_>, NnError>>()?;
        Mlp::from_layers(layers)
    }
}

impl Serialize for Mlp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MlpCheckpoint::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ck = MlpCheckpoint::deserialize(d)?;
        Mlp::try_from(ck).map_err(serde::de::Error::custom)
    }
}
