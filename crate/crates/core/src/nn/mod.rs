//! Feed-forward models: layer specs, named parameters, initializers and the
//! cross-entropy loss.
//!
//! Weights are stored `[out, in]` for linear layers and `[out, in, kh, kw]` for
//! convolutions. A `bias` layer owns its own tensor and adds it along the
//! channel axis, so every model is free of batch-coupled normalization.

mod init;
mod params;

use std::fmt;
use std::str::FromStr;

pub use init::{build_params, InitScheme, TRUNC_NORMAL_STD};
pub use params::ParamSet;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Linear { fan_in: usize, fan_out: usize },
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, pad: usize },
    Relu,
    Tanh,
    Flatten,
    Bias { channels: usize },
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Linear { fan_in, fan_out } => write!(f, "linear:{fan_in}:{fan_out}"),
            LayerSpec::Conv2d { in_channels, out_channels, kernel, pad } => {
                write!(f, "conv2d:{in_channels}:{out_channels}:{kernel}:{pad}")
            }
            LayerSpec::Relu => write!(f, "relu"),
            LayerSpec::Tanh => write!(f, "tanh"),
            LayerSpec::Flatten => write!(f, "flatten"),
            LayerSpec::Bias { channels } => write!(f, "bias:{channels}"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    /// `linear:IN:OUT`, `conv2d:IN:OUT:K[:PAD]`, `bias:C`, `relu`, `tanh`, `flatten`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::InvalidSpec(format!("cannot parse layer '{s}'"));
        let nums: Vec<usize> = parts[1..]
            .iter()
            .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let layer = match (parts[0].trim(), nums.as_slice()) {
            ("linear", &[fan_in, fan_out]) => LayerSpec::Linear { fan_in, fan_out },
            ("conv2d", &[i, o, k]) => LayerSpec::Conv2d { in_channels: i, out_channels: o, kernel: k, pad: 0 },
            ("conv2d", &[i, o, k, p]) => LayerSpec::Conv2d { in_channels: i, out_channels: o, kernel: k, pad: p },
            ("bias", &[channels]) => LayerSpec::Bias { channels },
            ("relu", []) => LayerSpec::Relu,
            ("tanh", []) => LayerSpec::Tanh,
            ("flatten", []) => LayerSpec::Flatten,
            _ => return Err(bad()),
        };
        Ok(layer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight { fan_in: usize, fan_out: usize },
    Bias,
}

/// Name, shape and role of one learnable tensor, in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    /// Index into [`ModelSpec::layers`].
    pub layer: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Per-sample input shape, without the batch axis.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, num_classes: usize) -> Result<Self> {
        let spec = ModelSpec { input_shape, layers, num_classes };
        spec.validate()?;
        Ok(spec)
    }

    /// flatten, 784→256→128→classes with ReLU between (input may be any shape).
    pub fn mlp3(input_shape: &[usize], num_classes: usize) -> Result<Self> {
        Self::mlp(input_shape, &[256, 128], num_classes)
    }

    /// Flatten followed by linear+bias layers with ReLU between them.
    pub fn mlp(input_shape: &[usize], hidden: &[usize], num_classes: usize) -> Result<Self> {
        let mut layers = vec![LayerSpec::Flatten];
        let mut width: usize = input_shape.iter().product();
        for &h in hidden {
            layers.push(LayerSpec::Linear { fan_in: width, fan_out: h });
            layers.push(LayerSpec::Bias { channels: h });
            layers.push(LayerSpec::Relu);
            width = h;
        }
        layers.push(LayerSpec::Linear { fan_in: width, fan_out: num_classes });
        layers.push(LayerSpec::Bias { channels: num_classes });
        Self::new(input_shape.to_vec(), layers, num_classes)
    }

    /// Two padded 3×3 conv+bias+relu blocks, flatten and a linear classifier.
    pub fn cnn4(input_shape: &[usize], channels: [usize; 2], num_classes: usize) -> Result<Self> {
        let &[c, h, w] = input_shape else {
            return Err(Error::InvalidSpec(format!("cnn4 expects a [C, H, W] input, got {input_shape:?}")));
        };
        let layers = vec![
            LayerSpec::Conv2d { in_channels: c, out_channels: channels[0], kernel: 3, pad: 1 },
            LayerSpec::Bias { channels: channels[0] },
            LayerSpec::Relu,
            LayerSpec::Conv2d { in_channels: channels[0], out_channels: channels[1], kernel: 3, pad: 1 },
            LayerSpec::Bias { channels: channels[1] },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Linear { fan_in: channels[1] * h * w, fan_out: num_classes },
            LayerSpec::Bias { channels: num_classes },
        ];
        Self::new(input_shape.to_vec(), layers, num_classes)
    }

    /// Walks the per-sample shape through every layer.
    pub fn validate(&self) -> Result<()> {
        self.output_shapes().map(|_| ())
    }

    fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.num_classes == 0 {
            return Err(Error::InvalidSpec("num_classes must be positive".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidSpec(format!("bad input shape {:?}", self.input_shape)));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("no layers".into()));
        }
        let mut cur = self.input_shape.clone();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let incompatible = |cur: &[usize]| Error::InvalidSpec(format!("layer {i} ({layer}) cannot take input of shape {cur:?}"));
            cur = match *layer {
                LayerSpec::Linear { fan_in, fan_out } => {
                    if fan_in == 0 || fan_out == 0 {
                        return Err(Error::InvalidSpec(format!("layer {i} ({layer}) has a zero extent")));
                    }
                    if cur != [fan_in] {
                        return Err(incompatible(&cur));
                    }
                    vec![fan_out]
                }
                LayerSpec::Conv2d { in_channels, out_channels, kernel, pad } => {
                    if in_channels == 0 || out_channels == 0 || kernel == 0 {
                        return Err(Error::InvalidSpec(format!("layer {i} ({layer}) has a zero extent")));
                    }
                    match cur.as_slice() {
                        &[c, h, w] if c == in_channels && h + 2 * pad >= kernel && w + 2 * pad >= kernel => {
                            vec![out_channels, h + 2 * pad - kernel + 1, w + 2 * pad - kernel + 1]
                        }
                        _ => return Err(incompatible(&cur)),
                    }
                }
                LayerSpec::Bias { channels } => {
                    if channels == 0 || cur[0] != channels {
                        return Err(incompatible(&cur));
                    }
                    cur
                }
                LayerSpec::Relu | LayerSpec::Tanh => cur,
                LayerSpec::Flatten => vec![cur.iter().product()],
            };
            shapes.push(cur.clone());
        }
        if cur != [self.num_classes] {
            return Err(Error::InvalidSpec(format!(
                "final output shape {cur:?} does not match {} classes",
                self.num_classes
            )));
        }
        Ok(shapes)
    }

    /// Learnable tensors in model order. Weighted layers are named `fcN` /
    /// `convN`; a bias layer takes the name of the weighted layer before it.
    pub fn param_specs(&self) -> Result<Vec<ParamSpec>> {
        self.validate()?;
        let mut out = Vec::new();
        let (mut fc, mut conv, mut free) = (0, 0, 0);
        let mut owner: Option<String> = None;
        for (layer_idx, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Linear { fan_in, fan_out } => {
                    fc += 1;
                    let name = format!("fc{fc}");
                    out.push(ParamSpec {
                        name: format!("{name}.weight"),
                        shape: vec![fan_out, fan_in],
                        kind: ParamKind::Weight { fan_in, fan_out },
                        layer: layer_idx,
                    });
                    owner = Some(name);
                }
                LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                    conv += 1;
                    let name = format!("conv{conv}");
                    let area = kernel * kernel;
                    out.push(ParamSpec {
                        name: format!("{name}.weight"),
                        shape: vec![out_channels, in_channels, kernel, kernel],
                        kind: ParamKind::Weight { fan_in: in_channels * area, fan_out: out_channels * area },
                        layer: layer_idx,
                    });
                    owner = Some(name);
                }
                LayerSpec::Bias { channels } => {
                    let name = owner.take().unwrap_or_else(|| {
                        free += 1;
                        format!("bias{free}")
                    });
                    out.push(ParamSpec {
                        name: format!("{name}.bias"),
                        shape: vec![channels],
                        kind: ParamKind::Bias,
                        layer: layer_idx,
                    });
                }
                LayerSpec::Relu | LayerSpec::Tanh | LayerSpec::Flatten => owner = None,
            }
        }
        Ok(out)
    }

    fn check_params(&self, params: &[Tensor]) -> Result<Vec<ParamSpec>> {
        let specs = self.param_specs()?;
        if specs.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "model has {} parameter tensors, got {}",
                specs.len(),
                params.len()
            )));
        }
        for (s, p) in specs.iter().zip(params) {
            if s.shape != p.shape() {
                return Err(Error::InvalidArgument(format!(
                    "'{}' should have shape {:?}, got {:?}",
                    s.name,
                    s.shape,
                    p.shape()
                )));
            }
        }
        Ok(specs)
    }

    /// Logits `[batch, classes]` for `inputs` of shape `[batch, ..input_shape]`.
    pub fn forward(&self, params: &[Tensor], inputs: &Tensor) -> Result<Tensor> {
        self.check_params(params)?;
        if inputs.rank() != self.input_shape.len() + 1 || inputs.shape()[1..] != self.input_shape[..] {
            let mut expected = vec![0];
            expected.extend_from_slice(&self.input_shape);
            return Err(crate::tensor::TensorError::ShapeMismatch {
                op: "forward",
                lhs: inputs.shape().to_vec(),
                rhs: expected,
            }
            .into());
        }
        let batch = inputs.shape()[0];
        let mut x = inputs.clone();
        let mut next = params.iter();
        for layer in &self.layers {
            x = match *layer {
                LayerSpec::Linear { .. } => {
                    let w = next.next().expect("checked above");
                    x.matmul(&w.transpose()?)?
                }
                LayerSpec::Conv2d { pad, .. } => {
                    let w = next.next().expect("checked above");
                    x.conv2d(w, pad)?
                }
                LayerSpec::Bias { .. } => {
                    let b = next.next().expect("checked above");
                    x.add_bias(b)?
                }
                LayerSpec::Relu => x.relu()?,
                LayerSpec::Tanh => x.tanh()?,
                LayerSpec::Flatten => {
                    let width = x.numel() / batch;
                    x.reshape(&[batch, width])?
                }
            };
        }
        Ok(x)
    }

    /// Mean softmax cross-entropy over the batch.
    pub fn loss(&self, params: &[Tensor], inputs: &Tensor, labels: &[usize]) -> Result<Tensor> {
        if inputs.rank() == 0 || inputs.shape()[0] != labels.len() {
            return Err(crate::tensor::TensorError::ShapeMismatch {
                op: "forward_loss",
                lhs: inputs.shape().to_vec(),
                rhs: vec![labels.len()],
            }
            .into());
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::LabelOutOfRange { label, classes: self.num_classes });
        }
        Ok(self.forward(params, inputs)?.softmax_cross_entropy(labels)?)
    }
}

impl fmt::Display for ModelSpec {
    /// `input=1x28x28 classes=10 layers=flatten,linear:784:256,...`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let input: Vec<String> = self.input_shape.iter().map(|d| d.to_string()).collect();
        let layers: Vec<String> = self.layers.iter().map(|l| l.to_string()).collect();
        write!(f, "input={} classes={} layers={}", input.join("x"), self.num_classes, layers.join(","))
    }
}

/// Parses `AxBxC` shape strings.
pub fn parse_shape(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|d| d.trim().parse::<usize>().map_err(|_| Error::InvalidSpec(format!("bad shape '{s}'"))))
        .collect()
}

/// Parses a comma-separated layer list.
pub fn parse_layers(s: &str) -> Result<Vec<LayerSpec>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

/// Mean cross-entropy of `spec` under `params`.
pub fn forward_loss(spec: &ModelSpec, params: &ParamSet, inputs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    spec.loss(&params.tensors(), inputs, labels)
}
