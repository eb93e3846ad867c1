use crate::error::{Error, Result};
use crate::tensor::Shape;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const SUBPATCH: usize = 16;
pub const BASE_FILTERS: usize = 64;
pub const DEFAULT_RESIDUAL_BLOCKS: usize = 15;
pub const DISCRIMINATOR_FILTERS: [usize; 7] = [64, 64, 128, 128, 256, 256, 512];
pub const FEATURE_CHANNELS: [usize; 5] = [32, 64, 128, 128, 128];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerDesc {
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        /// Replication padding applied before the convolution.
        pad: usize,
        activation: Activation,
    },
    /// `x + body(x)`.
    Residual { name: String, body: Vec<LayerDesc> },
    UpsampleNearest(usize),
    MeanPool(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkKind {
    Generator,
    Discriminator,
    Features,
}

impl NetworkKind {
    pub fn prefix(self) -> &'static str {
        match self {
            NetworkKind::Generator => "gen",
            NetworkKind::Discriminator => "disc",
            NetworkKind::Features => "feat",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub layers: Vec<LayerDesc>,
}

fn conv(name: String, cin: usize, cout: usize, kernel: usize, stride: usize, pad: usize, act: Activation) -> LayerDesc {
    LayerDesc::Conv {
        name,
        in_channels: cin,
        out_channels: cout,
        kernel,
        stride,
        pad,
        activation: act,
    }
}

fn check_channels(c: usize) -> Result<()> {
    if c == 1 || c == 3 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("channel count {c} unsupported; use 1 or 3")))
    }
}

/// Residual generator with the default depth.
pub fn build_generator(channels: usize) -> Result<NetworkSpec> {
    build_generator_with_blocks(channels, DEFAULT_RESIDUAL_BLOCKS)
}

pub fn build_generator_with_blocks(channels: usize, blocks: usize) -> Result<NetworkSpec> {
    check_channels(channels)?;
    let f = BASE_FILTERS;
    let lrelu = Activation::LeakyRelu;
    let mut layers = vec![conv("head".into(), channels, f, 3, 2, 1, lrelu)];
    for b in 0..blocks {
        layers.push(LayerDesc::Residual {
            name: format!("block{b}"),
            body: vec![
                conv(format!("block{b}.conv0"), f, f, 3, 1, 1, lrelu),
                conv(format!("block{b}.conv1"), f, f, 3, 1, 1, lrelu),
            ],
        });
    }
    layers.push(LayerDesc::UpsampleNearest(2));
    layers.push(conv("up".into(), f, f, 3, 1, 1, lrelu));
    layers.push(conv("tail".into(), f, channels, 3, 1, 1, Activation::Tanh));
    let spec = NetworkSpec {
        kind: NetworkKind::Generator,
        in_channels: channels,
        out_channels: channels,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

/// Conditional sub-patch discriminator; expects `2C` input channels at 16x16.
pub fn build_discriminator(channels: usize) -> Result<NetworkSpec> {
    check_channels(channels)?;
    let mut layers = Vec::new();
    let mut cin = 2 * channels;
    for (i, &cout) in DISCRIMINATOR_FILTERS.iter().enumerate() {
        layers.push(conv(format!("conv{i}"), cin, cout, 3, 1, 0, Activation::LeakyRelu));
        cin = cout;
    }
    layers.push(conv("out".into(), cin, 1, 2, 1, 0, Activation::Sigmoid));
    let spec = NetworkSpec {
        kind: NetworkKind::Discriminator,
        in_channels: 2 * channels,
        out_channels: 1,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

/// Fixed feature extractor: five 3x3 convolutions, mean pooling after the
/// second and fourth. Output is `128 x H/4 x W/4`.
pub fn build_feature_extractor(channels: usize) -> Result<NetworkSpec> {
    check_channels(channels)?;
    let mut layers = Vec::new();
    let mut cin = channels;
    for (i, &cout) in FEATURE_CHANNELS.iter().enumerate() {
        layers.push(conv(format!("conv{i}"), cin, cout, 3, 1, 1, Activation::LeakyRelu));
        if i == 1 || i == 3 {
            layers.push(LayerDesc::MeanPool(2));
        }
        cin = cout;
    }
    let spec = NetworkSpec {
        kind: NetworkKind::Features,
        in_channels: channels,
        out_channels: cin,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

impl NetworkSpec {
    /// Checks that successive layers agree on channel counts and that residual
    /// bodies return to their input width.
    pub fn validate(&self) -> Result<()> {
        let out = validate_stack(&self.layers, self.in_channels)?;
        if out != self.out_channels {
            return Err(Error::Shape(format!(
                "network ends with {out} channels, declared {}",
                self.out_channels
            )));
        }
        Ok(())
    }

    /// Parameter names and shapes in traversal order (weight then bias per
    /// convolution), prefixed by the network kind.
    pub fn parameter_shapes(&self) -> Vec<(String, Shape)> {
        let mut out = Vec::new();
        collect_shapes(&self.layers, self.kind.prefix(), &mut out);
        out
    }

    /// Weight names of the last convolution inside each residual body.
    pub fn residual_closing_weights(&self) -> Vec<String> {
        let prefix = self.kind.prefix();
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerDesc::Residual { body, .. } => body.iter().rev().find_map(|b| match b {
                    LayerDesc::Conv { name, .. } => Some(format!("{prefix}.{name}.weight")),
                    _ => None,
                }),
                _ => None,
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes().iter().map(|(_, s)| s.numel()).sum()
    }

    pub fn residual_blocks(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerDesc::Residual { .. }))
            .count()
    }

    /// Rejects inputs the network cannot process.
    pub fn check_input(&self, shape: Shape) -> Result<()> {
        let [_, c, h, w] = shape.0;
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "{} expects {} input channels, got {c} (dim 1 of {shape})",
                self.kind.prefix(),
                self.in_channels
            )));
        }
        match self.kind {
            NetworkKind::Generator => {
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::Shape(format!(
                        "generator needs even spatial extents, got {h}x{w}; pad by replication first"
                    )));
                }
                if h < SUBPATCH || w < SUBPATCH {
                    return Err(Error::Shape(format!("generator needs extents of at least {SUBPATCH}, got {h}x{w}")));
                }
            }
            NetworkKind::Discriminator => {
                if h != SUBPATCH || w != SUBPATCH {
                    return Err(Error::Shape(format!(
                        "discriminator input must be {SUBPATCH}x{SUBPATCH}, got {h}x{w}"
                    )));
                }
            }
            NetworkKind::Features => {
                if h % 4 != 0 || w % 4 != 0 {
                    return Err(Error::Shape(format!("feature extractor needs extents divisible by 4, got {h}x{w}")));
                }
            }
        }
        Ok(())
    }
}

fn validate_stack(layers: &[LayerDesc], mut channels: usize) -> Result<usize> {
    for layer in layers {
        match layer {
            LayerDesc::Conv {
                name,
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if *in_channels != channels {
                    return Err(Error::Shape(format!(
                        "layer {name} expects {in_channels} channels but receives {channels}"
                    )));
                }
                if *kernel == 0 || *stride == 0 || *out_channels == 0 {
                    return Err(Error::Invalid(format!("layer {name} has a zero extent")));
                }
                channels = *out_channels;
            }
            LayerDesc::Residual { name, body } => {
                let out = validate_stack(body, channels)?;
                if out != channels {
                    return Err(Error::Shape(format!(
                        "residual {name} maps {channels} channels to {out}"
                    )));
                }
            }
            LayerDesc::UpsampleNearest(f) | LayerDesc::MeanPool(f) => {
                if *f == 0 {
                    return Err(Error::Invalid("zero resampling factor".into()));
                }
            }
        }
    }
    Ok(channels)
}

fn collect_shapes(layers: &[LayerDesc], prefix: &str, out: &mut Vec<(String, Shape)>) {
    for layer in layers {
        match layer {
            LayerDesc::Conv {
                name,
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                out.push((
                    format!("{prefix}.{name}.weight"),
                    Shape::new(*out_channels, *in_channels, *kernel, *kernel),
                ));
                out.push((format!("{prefix}.{name}.bias"), Shape::new(1, *out_channels, 1, 1)));
            }
            LayerDesc::Residual { body, .. } => collect_shapes(body, prefix, out),
            _ => {}
        }
    }
}

/// Offsets of the non-overlapping sub-patches covering a `height x width`
/// patch, in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubPatchGrid {
    pub height: usize,
    pub width: usize,
    pub size: usize,
    pub offsets: Vec<(usize, usize)>,
}

impl SubPatchGrid {
    pub fn new(height: usize, width: usize, size: usize) -> Result<Self> {
        if size == 0 || !height.is_multiple_of(size) || !width.is_multiple_of(size) || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "{height}x{width} patch does not divide into {size}x{size} sub-patches"
            )));
        }
        let offsets = (0..height / size)
            .flat_map(|r| (0..width / size).map(move |c| (r * size, c * size)))
            .collect();
        Ok(SubPatchGrid {
            height,
            width,
            size,
            offsets,
        })
    }

    pub fn count(&self) -> usize {
        self.offsets.len()
    }
}
