use super::layer::{Layer, Shape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Feed-forward network: an ordered list of layers ending in an affine
/// layer that emits `num_classes` logits. Validated on construction and
/// immutable afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
    input_shape: Shape,
    num_classes: usize,
    /// `shapes[k]` is the input shape of layer `k`; the last entry is the
    /// output shape.
    shapes: Vec<Shape>,
    /// Layer indices of the affine layers, in order.
    affine: Vec<usize>,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>, input_shape: Shape, num_classes: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("no layers".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidNetwork("num_classes must be positive".into()));
        }
        if input_shape.is_empty() {
            return Err(Error::InvalidNetwork("input shape is empty".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        shapes.push(input_shape);
        for (k, layer) in layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes[k])
                .map_err(|msg| Error::InvalidNetwork(format!("layer {k} ({}): {msg}", layer.kind())))?;
            if let Some((w, b)) = layer.params() {
                if w.iter().chain(b).any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteWeight { layer: k });
                }
            }
            shapes.push(next);
        }
        if !layers.last().is_some_and(Layer::is_affine) {
            return Err(Error::InvalidNetwork("final layer must be dense or conv2d".into()));
        }
        let out = *shapes.last().unwrap();
        if out.len() != num_classes {
            return Err(Error::InvalidNetwork(format!(
                "output has {} entries but num_classes = {num_classes}",
                out.len()
            )));
        }
        let affine = layers
            .iter()
            .enumerate()
            .filter_map(|(k, l)| l.is_affine().then_some(k))
            .collect();
        Ok(Self {
            layers,
            input_shape,
            num_classes,
            shapes,
            affine,
        })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Input shape of layer `k` (`k == layers().len()` gives the output shape).
    pub fn shape_at(&self, k: usize) -> Shape {
        self.shapes[k]
    }

    /// Number of affine layers `l`.
    pub fn depth(&self) -> usize {
        self.affine.len()
    }

    /// Layer index of affine layer `j` (1-based, `1..=depth()`).
    pub fn affine_layer_index(&self, j: usize) -> Result<usize> {
        if j == 0 || j > self.affine.len() {
            return Err(Error::InvalidLayerIndex {
                index: j,
                num_affine: self.affine.len(),
            });
        }
        Ok(self.affine[j - 1])
    }

    pub fn affine_layer(&self, j: usize) -> Result<&Layer<T>> {
        Ok(&self.layers[self.affine_layer_index(j)?])
    }

    /// Position in the layer-output sequence (0 = network input) of the
    /// activation `a_j`, `j = 0..=l`. For `j < l` this is the tensor fed into
    /// affine layer `j + 1`; `a_l` is the logit vector.
    pub fn activation_position(&self, j: usize) -> Result<usize> {
        let l = self.affine.len();
        match j {
            _ if j < l => Ok(self.affine[j]),
            _ if j == l => Ok(self.layers.len()),
            _ => Err(Error::InvalidLayerIndex {
                index: j,
                num_affine: l,
            }),
        }
    }

    /// Width `d_j` of activation `a_j` (flattened element count).
    pub fn activation_width(&self, j: usize) -> Result<usize> {
        Ok(self.shapes[self.activation_position(j)?].len())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Same architecture, parameters converted to `U`.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self.layers.iter().map(Layer::cast).collect(),
            input_shape: self.input_shape,
            num_classes: self.num_classes,
            shapes: self.shapes.clone(),
            affine: self.affine.clone(),
        }
    }

    /// Replaces the parameters of the affine layers in place. Used by the
    /// trainer; the architecture never changes.
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }
}

/// Labelled examples sharing one input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    inputs: Vec<Vec<T>>,
    labels: Vec<usize>,
    input_shape: Shape,
    num_classes: usize,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(inputs: Vec<Vec<T>>, labels: Vec<usize>, input_shape: Shape, num_classes: usize) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidDataset("dataset must contain at least one example".into()));
        }
        if inputs.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some((i, x)) = inputs.iter().enumerate().find(|(_, x)| x.len() != input_shape.len()) {
            return Err(Error::InvalidDataset(format!(
                "example {i} has {} values, input shape {input_shape} needs {}",
                x.len(),
                input_shape.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidLabel { label, num_classes });
        }
        Ok(Self {
            inputs,
            labels,
            input_shape,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<T>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], usize)> {
        self.inputs.iter().map(Vec::as_slice).zip(self.labels.iter().copied())
    }

    /// Examples at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.input_shape,
            self.num_classes,
        )
    }

    pub fn cast<U: Scalar>(&self) -> LabeledDataset<U> {
        LabeledDataset {
            inputs: self.inputs.iter().map(|x| crate::scalar::cast_slice(x)).collect(),
            labels: self.labels.clone(),
            input_shape: self.input_shape,
            num_classes: self.num_classes,
        }
    }

    /// Checks the dataset can be fed to `net`.
    pub fn check_compatible(&self, net: &Network<T>) -> Result<()> {
        if self.input_shape != net.input_shape() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected: net.input_shape().to_string(),
                found: self.input_shape.to_string(),
            });
        }
        if self.num_classes != net.num_classes() {
            return Err(Error::InvalidDataset(format!(
                "dataset has {} classes, network has {}",
                self.num_classes,
                net.num_classes()
            )));
        }
        Ok(())
    }
}
