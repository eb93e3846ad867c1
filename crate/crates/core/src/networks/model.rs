use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{Activation, LayerDesc, NetworkKind, NetworkSpec, LEAKY_SLOPE, SUBPATCH};
use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, Tensor, Var};

/// Seed for the fixed feature extractor's weights.
pub const FEATURE_SEED: u64 = 0x0000_FEA7_0001;

/// Init gain of the closing convolution of each residual branch. Without it
/// the activation scale doubles per block and a deep stack starts with a
/// saturated tanh.
pub const RESIDUAL_INIT_GAIN: f64 = 0.1;

/// A network spec together with its parameter tensors, stored in
/// [`NetworkSpec::parameter_shapes`] order.
#[derive(Clone, Debug)]
pub struct Network<T: Element> {
    spec: NetworkSpec,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
}

/// Parameter handles of one network registered on a graph.
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: Vec<Var>,
}

fn activate<T: Element>(g: &Graph<T>, x: Var, act: Activation) -> Var {
    match act {
        Activation::Identity => x,
        Activation::LeakyRelu => g.leaky_relu(x, T::cast_f64(LEAKY_SLOPE)),
        Activation::Tanh => g.tanh(x),
        Activation::Sigmoid => g.sigmoid(x),
    }
}

impl<T: Element> Network<T> {
    /// Fan-in scaled uniform weights, bound `sqrt(6 / ((1 + a^2) fan_in))`
    /// for leaky slope `a` (times [`RESIDUAL_INIT_GAIN`] at the end of
    /// residual branches); zero biases.
    pub fn init(spec: NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = spec.parameter_shapes();
        let closing = spec.residual_closing_weights();
        let gain = 1.0 + LEAKY_SLOPE * LEAKY_SLOPE;
        let params = shapes
            .iter()
            .map(|(name, shape)| {
                if name.ends_with(".bias") {
                    Tensor::zeros(*shape)
                } else {
                    let fan_in = shape.0[1] * shape.0[2] * shape.0[3];
                    let mut bound = (6.0 / (gain * fan_in as f64)).sqrt();
                    if closing.contains(name) {
                        bound *= RESIDUAL_INIT_GAIN;
                    }
                    Tensor::from_fn(*shape, |_| T::cast_f64(rng.random_range(-bound..bound)))
                }
            })
            .collect();
        Network {
            spec,
            names: shapes.into_iter().map(|(n, _)| n).collect(),
            params,
        }
    }

    /// Builds from named tensors; names and shapes must match `spec` exactly.
    pub fn from_parameters(spec: NetworkSpec, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let shapes = spec.parameter_shapes();
        let mismatch = shapes.iter().zip(&named).position(|((want, _), (name, _))| want != name);
        if let Some(i) = mismatch {
            return Err(Error::Checkpoint(format!(
                "expected tensor {} for the {} network, found {}",
                shapes[i].0,
                spec.kind.prefix(),
                named[i].0
            )));
        }
        if named.len() != shapes.len() {
            return Err(Error::Checkpoint(format!(
                "{} network needs {} tensors, found {}",
                spec.kind.prefix(),
                shapes.len(),
                named.len()
            )));
        }
        let mut params = Vec::with_capacity(shapes.len());
        for ((want_name, want_shape), (name, tensor)) in shapes.iter().zip(named) {
            debug_assert_eq!(*want_name, name);
            if tensor.shape() != *want_shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {}, expected {want_shape}",
                    tensor.shape()
                )));
            }
            params.push(tensor);
        }
        Ok(Network {
            spec,
            names: shapes.into_iter().map(|(n, _)| n).collect(),
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Element>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    /// Registers the parameters on `g`; `trainable` decides whether they
    /// receive gradients.
    pub fn bind(&self, g: &Graph<T>, trainable: bool) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| g.leaf(p.clone(), trainable)).collect(),
        }
    }

    /// Records a forward pass of `x` on `g` using previously bound parameters.
    pub fn forward(&self, g: &Graph<T>, bound: &Bound, x: Var) -> Result<Var> {
        self.spec.check_input(g.shape(x))?;
        let mut next = 0;
        let out = record_stack(g, &self.spec.layers, &bound.vars, &mut next, x)?;
        debug_assert_eq!(next, bound.vars.len());
        Ok(out)
    }

    /// Forward pass without recording a tape for the whole network; memory
    /// stays proportional to a couple of activations.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.spec.check_input(x.shape())?;
        let mut next = 0;
        infer_stack(&self.spec.layers, &self.params, &mut next, x.clone())
    }
}

fn record_stack<T: Element>(g: &Graph<T>, layers: &[LayerDesc], params: &[Var], next: &mut usize, mut x: Var) -> Result<Var> {
    for layer in layers {
        x = match layer {
            LayerDesc::Conv {
                stride, pad, activation, ..
            } => {
                let (w, b) = (params[*next], params[*next + 1]);
                *next += 2;
                let input = if *pad > 0 { g.pad_replicate(x, *pad) } else { x };
                let y = g.conv2d(input, w, Some(b), *stride)?;
                activate(g, y, *activation)
            }
            LayerDesc::Residual { body, .. } => {
                let y = record_stack(g, body, params, next, x)?;
                g.add(x, y)?
            }
            LayerDesc::UpsampleNearest(f) => g.upsample_nearest(x, *f)?,
            LayerDesc::MeanPool(f) => g.avg_pool(x, *f)?,
        };
    }
    Ok(x)
}

fn infer_stack<T: Element>(layers: &[LayerDesc], params: &[Tensor<T>], next: &mut usize, mut x: Tensor<T>) -> Result<Tensor<T>> {
    for layer in layers {
        x = match layer {
            LayerDesc::Residual { body, .. } => {
                let y = infer_stack(body, params, next, x.clone())?;
                let g = Graph::new();
                let (a, b) = (g.constant(x), g.constant(y));
                let s = g.add(a, b)?;
                let out = g.value(s).clone();
                out
            }
            _ => {
                let g = Graph::new();
                let input = g.constant(x);
                let mut vars = Vec::new();
                if let LayerDesc::Conv { .. } = layer {
                    vars.push(g.constant(params[*next].clone()));
                    vars.push(g.constant(params[*next + 1].clone()));
                }
                let mut local = 0;
                let y = record_stack(&g, std::slice::from_ref(layer), &vars, &mut local, input)?;
                *next += local;
                let out = g.value(y).clone();
                out
            }
        };
    }
    Ok(x)
}

/// Channel-wise concatenation, candidate first.
pub fn condition_concat<T: Element>(g: &Graph<T>, candidate: Var, compressed: Var) -> Result<Var> {
    let (a, b) = (g.shape(candidate), g.shape(compressed));
    if a.0[0] != b.0[0] || a.0[2..] != b.0[2..] {
        return Err(Error::Shape(format!("cannot condition {a} on {b}: extents differ")));
    }
    g.concat_channels(candidate, compressed)
}

/// Scores every 16x16 sub-patch of `candidate` conditioned on `compressed`.
/// Output is `(N * P) x 1 x 1 x 1`, sample-major.
pub fn discriminate<T: Element>(d: &Network<T>, g: &Graph<T>, bound: &Bound, candidate: Var, compressed: Var) -> Result<Var> {
    if d.spec().kind != NetworkKind::Discriminator {
        return Err(Error::Invalid("discriminate needs a discriminator network".into()));
    }
    let joint = condition_concat(g, candidate, compressed)?;
    let tiles = g.subpatches(joint, SUBPATCH)?;
    d.forward(g, bound, tiles)
}
