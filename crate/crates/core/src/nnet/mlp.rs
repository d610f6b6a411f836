use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{NnetError, Parameterized};

/// Affine layer `y = W x + b`, with `W` stored `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform init in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((output, input), || rng.random_range(-bound..bound));
        let bias = Array1::from_shape_simple_fn(output, || rng.random_range(-bound..bound));
        Self { weight, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Feed-forward network: ReLU after every layer except the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
}

/// Activations cached by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    preacts: Vec<Array2<f64>>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

/// Partial derivatives with the same shape as the network.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// Randomly initialized network with the given layer widths, input first.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self, NnetError> {
        check_sizes(sizes)?;
        Ok(Self {
            layers: sizes.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect(),
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self, NnetError> {
        check_sizes(sizes)?;
        Ok(Self {
            layers: sizes.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Linear>) -> Result<Self, NnetError> {
        if layers.is_empty() {
            return Err(NnetError::Shape("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(NnetError::Shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(NnetError::Shape(format!("layer {i} bias length mismatch")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Linear::output_dim));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Tape), NnetError> {
        if x.ncols() != self.input_dim() {
            return Err(NnetError::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.weight.t()) + &layer.bias;
            inputs.push(h);
            h = if i < last { z.mapv(relu) } else { z.clone() };
            preacts.push(z);
        }
        Ok((h, Tape { inputs, preacts }))
    }

    /// Single-sample forward pass without recording a tape.
    pub fn forward_one(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, NnetError> {
        if x.len() != self.input_dim() {
            return Err(NnetError::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.weight.dot(&h) + &layer.bias;
            if i < last {
                h.mapv_inplace(relu);
            }
        }
        Ok(h)
    }

    /// Reverse-mode gradients of a loss whose derivative w.r.t. the network
    /// output is `dy`. Also returns the derivative w.r.t. the input batch.
    pub fn backward(&self, tape: &Tape, dy: ArrayView2<f64>) -> Result<(MlpGrads, Array2<f64>), NnetError> {
        if tape.inputs.len() != self.layers.len() {
            return Err(NnetError::Shape("tape was recorded on a different network".into()));
        }
        if dy.dim() != (tape.batch_size(), self.output_dim()) {
            return Err(NnetError::Shape(format!(
                "output gradient is {:?}, expected {:?}",
                dy.dim(),
                (tape.batch_size(), self.output_dim())
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = dy.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if tape.inputs[i].ncols() != layer.input_dim() {
                return Err(NnetError::Shape("tape was recorded on a different network".into()));
            }
            let weight = g.t().dot(&tape.inputs[i]);
            let bias = g.sum_axis(Axis(0));
            let mut dx = g.dot(&layer.weight);
            if i > 0 {
                ndarray::Zip::from(&mut dx)
                    .and(&tape.preacts[i - 1])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            grads.push(Linear { weight, bias });
            g = dx;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, g))
    }
}

fn check_sizes(sizes: &[usize]) -> Result<(), NnetError> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(NnetError::Shape(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

fn linear_slices(layers: &[Linear]) -> Vec<&[f64]> {
    layers
        .iter()
        .flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
        .collect()
}

fn linear_slices_mut(layers: &mut [Linear]) -> Vec<&mut [f64]> {
    layers
        .iter_mut()
        .flat_map(|l| {
            [
                l.weight.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
        .collect()
}

impl Parameterized for Mlp {
    fn param_slices(&self) -> Vec<&[f64]> {
        linear_slices(&self.layers)
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        linear_slices_mut(&mut self.layers)
    }
}

impl Parameterized for MlpGrads {
    fn param_slices(&self) -> Vec<&[f64]> {
        linear_slices(&self.layers)
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        linear_slices_mut(&mut self.layers)
    }
}

impl MlpGrads {
    pub fn zeros_like(m: &Mlp) -> Self {
        Self {
            layers: m
                .layers
                .iter()
                .map(|l| Linear::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }
}
