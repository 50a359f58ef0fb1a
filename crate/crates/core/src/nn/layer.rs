use std::fmt;

use serde::{Deserialize, Serialize};

use super::conv::{conv2d_forward, conv2d_kernel_grad, conv2d_transpose, ConvGeometry};
use crate::scalar::Scalar;

/// Shape of a tensor flowing between layers. Feature maps are channel-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Vector(usize),
    Map {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(d) => d,
            Shape::Map {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[d]` or `[c, h, w]`.
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Vector(d) => vec![d],
            Shape::Map {
                channels,
                height,
                width,
            } => vec![channels, height, width],
        }
    }

    pub fn from_dims(dims: &[usize]) -> Option<Self> {
        match *dims {
            [d] => Some(Shape::Vector(d)),
            [channels, height, width] => Some(Shape::Map {
                channels,
                height,
                width,
            }),
            _ => None,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Vector(d) => write!(f, "[{d}]"),
            Shape::Map {
                channels,
                height,
                width,
            } => write!(f, "[{channels}x{height}x{width}]"),
        }
    }
}

impl Serialize for Shape {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.dims().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Shape {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let dims = Vec::<usize>::deserialize(d)?;
        Shape::from_dims(&dims)
            .ok_or_else(|| serde::de::Error::custom(format!("unsupported shape {dims:?}")))
    }
}

/// Fully connected layer, `z = W a + b` with `W` stored row-major
/// (`out_dim × in_dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weight: Vec<T>, bias: Vec<T>, in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// Builds a layer from nested rows.
    pub fn from_rows(rows: &[Vec<T>], bias: Vec<T>) -> Self {
        let out_dim = rows.len();
        let in_dim = rows.first().map_or(0, Vec::len);
        let weight = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(weight, bias, in_dim, out_dim)
    }

    pub fn identity(dim: usize) -> Self {
        let mut weight = vec![T::zero(); dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = T::one();
        }
        Self::new(weight, vec![T::zero(); dim], dim, dim)
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.weight[i * self.in_dim..(i + 1) * self.in_dim]
    }

    /// `W x` without bias.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.out_dim)
            .map(|i| {
                let acc: f64 = self.row(i).iter().zip(x).map(|(w, v)| w.widen() * v.widen()).sum();
                T::narrow(acc)
            })
            .collect()
    }

    /// `Wᵀ y`.
    pub fn matvec_t(&self, y: &[T]) -> Vec<T> {
        let mut acc = vec![0.0f64; self.in_dim];
        for (i, yi) in y.iter().enumerate() {
            let yi = yi.widen();
            if yi == 0.0 {
                continue;
            }
            for (a, w) in acc.iter_mut().zip(self.row(i)) {
                *a += w.widen() * yi;
            }
        }
        acc.into_iter().map(T::narrow).collect()
    }
}

/// 2-D convolution over a channel-major feature map. The kernel is stored
/// `out_channels × in_channels × kernel_h × kernel_w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn geometry(&self, input: Shape) -> Option<ConvGeometry> {
        match input {
            Shape::Map {
                channels,
                height,
                width,
            } if channels == self.in_channels => ConvGeometry::new(
                channels,
                height,
                width,
                self.out_channels,
                self.kernel_h,
                self.kernel_w,
                self.stride,
                self.padding,
            ),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AvgPool {
    pub window: usize,
    pub stride: usize,
}

impl AvgPool {
    fn out_extent(&self, extent: usize) -> Option<usize> {
        if self.window == 0 || self.stride == 0 || extent < self.window {
            return None;
        }
        Some((extent - self.window) / self.stride + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Dense(Dense<T>),
    Conv2d(Conv2d<T>),
    Relu,
    Flatten,
    AvgPool(AvgPool),
}

/// Parameter gradient of one affine layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::AvgPool(_) => "avgpool",
        }
    }

    /// Dense and Conv2d layers carry a weight operator.
    pub fn is_affine(&self) -> bool {
        matches!(self, Layer::Dense(_) | Layer::Conv2d(_))
    }

    /// Shape produced from `input`, or a message describing the mismatch.
    pub fn output_shape(&self, input: Shape) -> Result<Shape, String> {
        match self {
            Layer::Dense(d) => {
                if d.weight.len() != d.in_dim * d.out_dim || d.bias.len() != d.out_dim {
                    return Err(format!(
                        "dense parameters have {} weights / {} biases for {}x{}",
                        d.weight.len(),
                        d.bias.len(),
                        d.out_dim,
                        d.in_dim
                    ));
                }
                match input {
                    Shape::Vector(n) if n == d.in_dim => Ok(Shape::Vector(d.out_dim)),
                    other => Err(format!("dense expects [{}], got {other}", d.in_dim)),
                }
            }
            Layer::Conv2d(c) => {
                let g = c
                    .geometry(input)
                    .ok_or_else(|| format!("conv2d with {} input channels cannot take {input}", c.in_channels))?;
                if c.kernel.len() != g.kernel_len() || c.bias.len() != c.out_channels {
                    return Err(format!(
                        "conv2d parameters have {} kernel / {} bias entries",
                        c.kernel.len(),
                        c.bias.len()
                    ));
                }
                Ok(Shape::Map {
                    channels: g.out_channels,
                    height: g.out_h,
                    width: g.out_w,
                })
            }
            Layer::Relu => Ok(input),
            Layer::Flatten => Ok(Shape::Vector(input.len())),
            Layer::AvgPool(p) => match input {
                Shape::Map {
                    channels,
                    height,
                    width,
                } => match (p.out_extent(height), p.out_extent(width)) {
                    (Some(h), Some(w)) => Ok(Shape::Map {
                        channels,
                        height: h,
                        width: w,
                    }),
                    _ => Err(format!("avgpool window {} does not fit {input}", p.window)),
                },
                other => Err(format!("avgpool expects a feature map, got {other}")),
            },
        }
    }

    /// Forward pass of a validated layer.
    pub fn forward(&self, input: &[T], shape: Shape) -> Vec<T> {
        match self {
            Layer::Dense(d) => {
                let mut z = d.matvec(input);
                for (zi, bi) in z.iter_mut().zip(&d.bias) {
                    *zi += *bi;
                }
                z
            }
            Layer::Conv2d(c) => {
                let g = c.geometry(shape).expect("validated conv geometry");
                let mut z = conv2d_forward(&c.kernel, &g, input);
                let plane = g.out_h * g.out_w;
                for (o, b) in c.bias.iter().enumerate() {
                    for v in &mut z[o * plane..(o + 1) * plane] {
                        *v += *b;
                    }
                }
                z
            }
            Layer::Relu => input.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
            Layer::Flatten => input.to_vec(),
            Layer::AvgPool(p) => avgpool_forward(p, input, shape),
        }
    }

    /// Bias-free linear part of an affine layer.
    pub fn apply_linear(&self, input: &[T], shape: Shape) -> Option<Vec<T>> {
        match self {
            Layer::Dense(d) => Some(d.matvec(input)),
            Layer::Conv2d(c) => Some(conv2d_forward(&c.kernel, &c.geometry(shape)?, input)),
            _ => None,
        }
    }

    /// Pulls an output cotangent back to the layer input. `input` is the
    /// value the layer saw in the forward pass. ReLU has derivative 0 at 0.
    pub fn backward_input(&self, input: &[T], shape: Shape, grad_out: &[T]) -> Vec<T> {
        match self {
            Layer::Dense(d) => d.matvec_t(grad_out),
            Layer::Conv2d(c) => {
                conv2d_transpose(&c.kernel, &c.geometry(shape).expect("validated conv geometry"), grad_out)
            }
            Layer::Relu => input
                .iter()
                .zip(grad_out)
                .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                .collect(),
            Layer::Flatten => grad_out.to_vec(),
            Layer::AvgPool(p) => avgpool_backward(p, shape, grad_out),
        }
    }

    /// Parameter gradient of an affine layer; `None` for parameter-free layers.
    pub fn backward_params(&self, input: &[T], shape: Shape, grad_out: &[T]) -> Option<ParamGrad<T>> {
        match self {
            Layer::Dense(d) => {
                let mut weight = Vec::with_capacity(d.weight.len());
                for g in grad_out {
                    let g = g.widen();
                    weight.extend(input.iter().map(|x| T::narrow(g * x.widen())));
                }
                Some(ParamGrad {
                    weight,
                    bias: grad_out.to_vec(),
                })
            }
            Layer::Conv2d(c) => {
                let g = c.geometry(shape).expect("validated conv geometry");
                let weight = conv2d_kernel_grad(&g, input, grad_out);
                let plane = g.out_h * g.out_w;
                let bias = (0..c.out_channels)
                    .map(|o| T::narrow(grad_out[o * plane..(o + 1) * plane].iter().map(|v| v.widen()).sum()))
                    .collect();
                Some(ParamGrad { weight, bias })
            }
            _ => None,
        }
    }

    pub fn params(&self) -> Option<(&[T], &[T])> {
        match self {
            Layer::Dense(d) => Some((&d.weight, &d.bias)),
            Layer::Conv2d(c) => Some((&c.kernel, &c.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Vec<T>, &mut Vec<T>)> {
        match self {
            Layer::Dense(d) => Some((&mut d.weight, &mut d.bias)),
            Layer::Conv2d(c) => Some((&mut c.kernel, &mut c.bias)),
            _ => None,
        }
    }

    /// Converts the parameters to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Layer<U> {
        use crate::scalar::cast_slice;
        match self {
            Layer::Dense(d) => Layer::Dense(Dense {
                weight: cast_slice(&d.weight),
                bias: cast_slice(&d.bias),
                in_dim: d.in_dim,
                out_dim: d.out_dim,
            }),
            Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                kernel: cast_slice(&c.kernel),
                bias: cast_slice(&c.bias),
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel_h: c.kernel_h,
                kernel_w: c.kernel_w,
                stride: c.stride,
                padding: c.padding,
            }),
            Layer::Relu => Layer::Relu,
            Layer::Flatten => Layer::Flatten,
            Layer::AvgPool(p) => Layer::AvgPool(*p),
        }
    }
}

fn map_dims(shape: Shape) -> (usize, usize, usize) {
    match shape {
        Shape::Map {
            channels,
            height,
            width,
        } => (channels, height, width),
        Shape::Vector(_) => unreachable!("avgpool on a validated feature map"),
    }
}

fn avgpool_forward<T: Scalar>(p: &AvgPool, input: &[T], shape: Shape) -> Vec<T> {
    let (c, h, w) = map_dims(shape);
    let oh = (h - p.window) / p.stride + 1;
    let ow = (w - p.window) / p.stride + 1;
    let scale = 1.0 / (p.window * p.window) as f64;
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..p.window {
                    for dx in 0..p.window {
                        acc += input[(ch * h + oy * p.stride + dy) * w + ox * p.stride + dx].widen();
                    }
                }
                out.push(T::narrow(acc * scale));
            }
        }
    }
    out
}

fn avgpool_backward<T: Scalar>(p: &AvgPool, shape: Shape, grad_out: &[T]) -> Vec<T> {
    let (c, h, w) = map_dims(shape);
    let oh = (h - p.window) / p.stride + 1;
    let ow = (w - p.window) / p.stride + 1;
    let scale = 1.0 / (p.window * p.window) as f64;
    let mut acc = vec![0.0f64; c * h * w];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = grad_out[(ch * oh + oy) * ow + ox].widen() * scale;
                for dy in 0..p.window {
                    for dx in 0..p.window {
                        acc[(ch * h + oy * p.stride + dy) * w + ox * p.stride + dx] += g;
                    }
                }
            }
        }
    }
    acc.into_iter().map(T::narrow).collect()
}
