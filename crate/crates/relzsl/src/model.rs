//! Encoder-decoder network over class embeddings.
//!
//! The encoder maps an a-dimensional class embedding into the
//! d-dimensional visual feature space; the decoder maps back. Hidden
//! layers use ReLU, the final layer of each stack uses ELU. Gradients
//! are hand-derived, so forward passes record a [`ForwardTrace`] that
//! the backward pass consumes.

use crate::error::{Error, Result};
use crate::numkit::{elu, elu_grad, relu, relu_grad, Matrix, Rng};

pub const ELU_ALPHA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Elu,
    Linear,
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => relu(z),
            Activation::Elu => elu(z, ELU_ALPHA),
            Activation::Linear => z,
        }
    }

    /// Derivative at the pre-activation value.
    pub fn grad(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => relu_grad(z),
            Activation::Elu => elu_grad(z, ELU_ALPHA),
            Activation::Linear => 1.0,
        }
    }

    /// Stable byte tag used by the checkpoint format.
    pub fn tag(&self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Elu => 1,
            Activation::Linear => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Activation> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Elu),
            2 => Ok(Activation::Linear),
            other => Err(Error::BadCheckpoint(format!(
                "unknown activation tag {other}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// Fully connected layer computing `post = act(input · weights + bias)`.
/// Weights are stored input-major: `weights[i][o]` scales input i into
/// output o.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub spec: LayerSpec,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(spec: LayerSpec, weights: Matrix, bias: Vec<f64>) -> Result<Dense> {
        if weights.rows() != spec.in_dim || weights.cols() != spec.out_dim {
            return Err(Error::shape(
                "dense layer",
                format!(
                    "weights {}x{} vs spec {}x{}",
                    weights.rows(),
                    weights.cols(),
                    spec.in_dim,
                    spec.out_dim
                ),
            ));
        }
        if bias.len() != spec.out_dim {
            return Err(Error::shape(
                "dense layer",
                format!("bias {} vs out dim {}", bias.len(), spec.out_dim),
            ));
        }
        Ok(Dense {
            spec,
            weights,
            bias,
        })
    }

    fn glorot(spec: LayerSpec, rng: &mut Rng) -> Dense {
        let bound = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
        let data = (0..spec.in_dim * spec.out_dim)
            .map(|_| rng.uniform(-bound, bound))
            .collect();
        Dense {
            spec,
            weights: Matrix::from_vec(spec.in_dim, spec.out_dim, data)
                .expect("glorot dims consistent"),
            bias: vec![0.0; spec.out_dim],
        }
    }
}

/// Record of one forward pass: the input plus, per layer, the
/// pre-activation and the activation. Depth equals the layer count.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub input: Matrix,
    pub pre: Vec<Matrix>,
    pub post: Vec<Matrix>,
}

impl ForwardTrace {
    /// Activation of the last layer.
    pub fn output(&self) -> &Matrix {
        self.post.last().unwrap_or(&self.input)
    }
}

/// Per-layer parameter gradients, matching [`Dense`] layout.
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients for every parameter tensor in the network.
#[derive(Clone, Debug)]
pub struct NetGrads {
    pub encoder: Vec<LayerGrads>,
    pub decoder: Vec<LayerGrads>,
}

impl NetGrads {
    pub fn zeros_like(net: &Network) -> NetGrads {
        let zero = |stack: &[Dense]| {
            stack
                .iter()
                .map(|l| LayerGrads {
                    weights: Matrix::zeros(l.spec.in_dim, l.spec.out_dim),
                    bias: vec![0.0; l.spec.out_dim],
                })
                .collect()
        };
        NetGrads {
            encoder: zero(&net.encoder),
            decoder: zero(&net.decoder),
        }
    }

    pub fn add_assign(&mut self, other: &NetGrads) {
        let add = |into: &mut Vec<LayerGrads>, from: &[LayerGrads]| {
            for (a, b) in into.iter_mut().zip(from) {
                for (x, y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                    *x += y;
                }
                for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                    *x += y;
                }
            }
        };
        add(&mut self.encoder, &other.encoder);
        add(&mut self.decoder, &other.decoder);
    }

    pub fn scale(&mut self, c: f64) {
        for stack in [&mut self.encoder, &mut self.decoder] {
            for l in stack.iter_mut() {
                for x in l.weights.data_mut() {
                    *x *= c;
                }
                for x in &mut l.bias {
                    *x *= c;
                }
            }
        }
    }

    /// Gradient tensors in the canonical optimizer order: encoder layers
    /// first (weights then bias per layer), decoder after when included.
    /// Must stay aligned with [`Network::trainable_mut`].
    pub fn tensors(&self, include_decoder: bool) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.encoder {
            out.push(l.weights.data());
            out.push(l.bias.as_slice());
        }
        if include_decoder {
            for l in &self.decoder {
                out.push(l.weights.data());
                out.push(l.bias.as_slice());
            }
        }
        out
    }
}

/// Whether a parameter tensor is a weight matrix or a bias vector.
/// Weight decay applies to weights only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    encoder: Vec<Dense>,
    decoder: Vec<Dense>,
    attr_dim: usize,
    feat_dim: usize,
}

/// Builds the encoder a -> hidden... -> d and the mirror decoder
/// d -> reversed(hidden)... -> a. Hidden layers ReLU, final layers ELU.
/// Weights are Glorot-uniform, biases zero; the draw order is fixed so
/// one seed always yields one network.
pub fn build_network(
    attr_dim: usize,
    feat_dim: usize,
    encoder_hidden: &[usize],
    rng: &mut Rng,
) -> Result<Network> {
    if attr_dim == 0 || feat_dim == 0 {
        return Err(Error::InvalidConfig(format!(
            "network dims must be positive, got a={attr_dim} d={feat_dim}"
        )));
    }
    if encoder_hidden.contains(&0) {
        return Err(Error::InvalidConfig(
            "hidden layer sizes must be positive".to_string(),
        ));
    }
    let chain = |from: usize, to: usize, hidden: &[usize]| -> Vec<LayerSpec> {
        let mut dims = vec![from];
        dims.extend_from_slice(hidden);
        dims.push(to);
        (0..dims.len() - 1)
            .map(|i| LayerSpec {
                in_dim: dims[i],
                out_dim: dims[i + 1],
                activation: if i + 2 == dims.len() {
                    Activation::Elu
                } else {
                    Activation::Relu
                },
            })
            .collect()
    };
    let reversed: Vec<usize> = encoder_hidden.iter().rev().copied().collect();
    let encoder = chain(attr_dim, feat_dim, encoder_hidden)
        .into_iter()
        .map(|spec| Dense::glorot(spec, rng))
        .collect();
    let decoder = chain(feat_dim, attr_dim, &reversed)
        .into_iter()
        .map(|spec| Dense::glorot(spec, rng))
        .collect();
    Ok(Network {
        encoder,
        decoder,
        attr_dim,
        feat_dim,
    })
}

impl Network {
    /// Reassembles a network from explicit layers, checking that the
    /// encoder chains a -> d and the decoder chains d -> a.
    pub fn from_parts(encoder: Vec<Dense>, decoder: Vec<Dense>) -> Result<Network> {
        for (name, stack) in [("encoder", &encoder), ("decoder", &decoder)] {
            if stack.is_empty() {
                return Err(Error::EmptyInput("network stack"));
            }
            for w in stack.windows(2) {
                if w[0].spec.out_dim != w[1].spec.in_dim {
                    return Err(Error::shape(
                        "network assembly",
                        format!(
                            "{name} layer boundary {} -> {}",
                            w[0].spec.out_dim, w[1].spec.in_dim
                        ),
                    ));
                }
            }
        }
        let attr_dim = encoder[0].spec.in_dim;
        let feat_dim = encoder.last().unwrap().spec.out_dim;
        if decoder[0].spec.in_dim != feat_dim || decoder.last().unwrap().spec.out_dim != attr_dim
        {
            return Err(Error::shape(
                "network assembly",
                format!(
                    "decoder maps {} -> {}, expected {} -> {}",
                    decoder[0].spec.in_dim,
                    decoder.last().unwrap().spec.out_dim,
                    feat_dim,
                    attr_dim
                ),
            ));
        }
        Ok(Network {
            encoder,
            decoder,
            attr_dim,
            feat_dim,
        })
    }

    pub fn attr_dim(&self) -> usize {
        self.attr_dim
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn encoder(&self) -> &[Dense] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[Dense] {
        &self.decoder
    }

    /// Maps class embeddings (rows of `y`) into visual space.
    pub fn encode(&self, y: &Matrix) -> Result<ForwardTrace> {
        if y.cols() != self.attr_dim {
            return Err(Error::shape(
                "encode",
                format!("input dim {} vs attribute dim {}", y.cols(), self.attr_dim),
            ));
        }
        forward_stack(&self.encoder, y)
    }

    /// Reconstructs class embeddings from visual-space rows of `x`.
    pub fn decode(&self, x: &Matrix) -> Result<ForwardTrace> {
        if x.cols() != self.feat_dim {
            return Err(Error::shape(
                "decode",
                format!("input dim {} vs feature dim {}", x.cols(), self.feat_dim),
            ));
        }
        forward_stack(&self.decoder, x)
    }

    /// Parameter tensors in the canonical optimizer order (see
    /// [`NetGrads::tensors`]). `include_decoder = false` leaves decoder
    /// parameters entirely outside the optimizer.
    pub fn trainable_mut(&mut self, include_decoder: bool) -> Vec<(&mut [f64], ParamKind)> {
        let mut out = Vec::new();
        let decoder = if include_decoder {
            self.decoder.as_mut_slice()
        } else {
            &mut []
        };
        for l in self.encoder.iter_mut().chain(decoder.iter_mut()) {
            out.push((l.weights.data_mut(), ParamKind::Weight));
            out.push((l.bias.as_mut_slice(), ParamKind::Bias));
        }
        out
    }
}

/// Runs `input` through the stack, recording pre- and post-activations.
pub fn forward_stack(layers: &[Dense], input: &Matrix) -> Result<ForwardTrace> {
    let mut pre = Vec::with_capacity(layers.len());
    let mut post = Vec::with_capacity(layers.len());
    let mut current = input;
    for layer in layers {
        let z = current.matmul(&layer.weights)?.add_row_broadcast(&layer.bias)?;
        let a = z.map(|v| layer.spec.activation.apply(v));
        pre.push(z);
        post.push(a);
        current = post.last().unwrap();
    }
    Ok(ForwardTrace {
        input: input.clone(),
        pre,
        post,
    })
}

/// Result of backpropagating through one stack: per-layer parameter
/// gradients plus the gradient with respect to the stack input (needed
/// when the stack's input came from another differentiable stage).
#[derive(Clone, Debug)]
pub struct BackwardOutput {
    pub layer_grads: Vec<LayerGrads>,
    pub input_grad: Matrix,
}

/// Backpropagates `upstream` (gradient of the loss with respect to the
/// stack output) through a recorded trace.
///
/// For each layer with `z = a_prev * W + b` and `a = act(z)`:
/// `d = upstream .* act'(z)`, `dW = a_prev^T d`, `db = column sums of d`,
/// and the gradient passed down is `d W^T`.
pub fn backward_stack(
    layers: &[Dense],
    trace: &ForwardTrace,
    upstream: &Matrix,
) -> Result<BackwardOutput> {
    if trace.pre.len() != layers.len() {
        return Err(Error::shape(
            "backward",
            format!("trace depth {} vs {} layers", trace.pre.len(), layers.len()),
        ));
    }
    let out = trace.output();
    if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
        return Err(Error::shape(
            "backward",
            format!(
                "upstream {}x{} vs output {}x{}",
                upstream.rows(),
                upstream.cols(),
                out.rows(),
                out.cols()
            ),
        ));
    }
    let mut grads: Vec<LayerGrads> = Vec::with_capacity(layers.len());
    let mut g = upstream.clone();
    for (l, layer) in layers.iter().enumerate().rev() {
        let d = g.hadamard(&trace.pre[l].map(|z| layer.spec.activation.grad(z)))?;
        let a_prev = if l == 0 { &trace.input } else { &trace.post[l - 1] };
        grads.push(LayerGrads {
            weights: a_prev.transpose().matmul(&d)?,
            bias: d.column_sums(),
        });
        g = d.matmul(&layer.weights.transpose())?;
    }
    grads.reverse();
    Ok(BackwardOutput {
        layer_grads: grads,
        input_grad: g,
    })
}
