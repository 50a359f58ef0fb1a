use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{decode_container, encode_container, read_f32, validate_layout, PayloadWriter, TensorRef, FORMAT_VERSION, MODEL_MAGIC};
use crate::error::{Error, Result};
use crate::nn::{AvgPool, Conv2d, Dense, Layer, Network, Shape};
use crate::scalar::Scalar;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<TensorRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<TensorRef>,
}

impl LayerRecord {
    fn bare(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            in_dim: None,
            out_dim: None,
            in_channels: None,
            out_channels: None,
            kernel: None,
            window: None,
            stride: None,
            padding: None,
            weight: None,
            bias: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    input_shape: Shape,
    num_classes: usize,
    payload_bytes: usize,
    layers: Vec<LayerRecord>,
}

/// Serializes a network; weights are stored as f32 whatever `T` is.
pub fn encode_model<T: Scalar>(net: &Network<T>) -> Result<Vec<u8>> {
    let mut payload = PayloadWriter::default();
    let mut f32s = |v: &[T]| payload.push_f32(v.iter().map(|x| x.widen() as f32));
    let mut records = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        let rec = match layer {
            Layer::Dense(d) => LayerRecord {
                in_dim: Some(d.in_dim),
                out_dim: Some(d.out_dim),
                weight: Some(f32s(&d.weight)),
                bias: Some(f32s(&d.bias)),
                ..LayerRecord::bare("dense")
            },
            Layer::Conv2d(c) => LayerRecord {
                in_channels: Some(c.in_channels),
                out_channels: Some(c.out_channels),
                kernel: Some([c.kernel_h, c.kernel_w]),
                stride: Some(c.stride),
                padding: Some(c.padding),
                weight: Some(f32s(&c.kernel)),
                bias: Some(f32s(&c.bias)),
                ..LayerRecord::bare("conv2d")
            },
            Layer::Relu => LayerRecord::bare("relu"),
            Layer::Flatten => LayerRecord::bare("flatten"),
            Layer::AvgPool(p) => LayerRecord {
                window: Some(p.window),
                stride: Some(p.stride),
                ..LayerRecord::bare("avg_pool")
            },
        };
        records.push(rec);
    }
    let payload = payload.into_bytes();
    let header = ModelHeader {
        format_version: FORMAT_VERSION,
        input_shape: net.input_shape(),
        num_classes: net.num_classes(),
        payload_bytes: payload.len(),
        layers: records,
    };
    encode_container(MODEL_MAGIC, &json!(header), &payload)
}

fn field(value: Option<usize>, kind: &str, name: &str, at: usize) -> Result<usize> {
    value.ok_or_else(|| Error::Format(format!("layer {at} ({kind}) lacks `{name}`")))
}

fn tensor(payload: &[u8], r: Option<TensorRef>, expected: usize, kind: &str, name: &str, at: usize) -> Result<Vec<f32>> {
    let r = r.ok_or_else(|| Error::Format(format!("layer {at} ({kind}) lacks `{name}`")))?;
    if r.len != expected {
        return Err(Error::Format(format!(
            "layer {at} {name}: declared {} elements, layer needs {expected}",
            r.len
        )));
    }
    Ok(read_f32(payload, r))
}

pub fn decode_model(bytes: &[u8]) -> Result<Network<f32>> {
    let (header, payload) = decode_container(MODEL_MAGIC, bytes)?;
    if let Some(layers) = header.get("layers").and_then(Value::as_array) {
        for l in layers {
            match l.get("type").and_then(Value::as_str) {
                Some("dense" | "conv2d" | "relu" | "flatten" | "avg_pool") => {}
                Some(other) => return Err(Error::UnknownLayerType(other.to_string())),
                None => return Err(Error::Format("layer record without a `type`".into())),
            }
        }
    }
    let header: ModelHeader = serde_json::from_value(header)?;

    let refs: Vec<(String, TensorRef)> = header
        .layers
        .iter()
        .enumerate()
        .flat_map(|(i, l)| {
            [("weight", l.weight), ("bias", l.bias)]
                .into_iter()
                .filter_map(move |(n, r)| r.map(|r| (format!("{n} of layer {i}"), r)))
        })
        .collect();
    validate_layout(&refs, payload.len())?;

    let mut layers = Vec::with_capacity(header.layers.len());
    for (i, rec) in header.layers.into_iter().enumerate() {
        let kind = rec.kind.as_str();
        let layer = match kind {
            "dense" => {
                let in_dim = field(rec.in_dim, kind, "in_dim", i)?;
                let out_dim = field(rec.out_dim, kind, "out_dim", i)?;
                let weight = tensor(payload, rec.weight, in_dim * out_dim, kind, "weight", i)?;
                let bias = tensor(payload, rec.bias, out_dim, kind, "bias", i)?;
                Layer::Dense(Dense::new(weight, bias, in_dim, out_dim))
            }
            "conv2d" => {
                let in_channels = field(rec.in_channels, kind, "in_channels", i)?;
                let out_channels = field(rec.out_channels, kind, "out_channels", i)?;
                let [kernel_h, kernel_w] = rec
                    .kernel
                    .ok_or_else(|| Error::Format(format!("layer {i} (conv2d) lacks `kernel`")))?;
                let stride = field(rec.stride, kind, "stride", i)?;
                let padding = field(rec.padding, kind, "padding", i)?;
                let kernel = tensor(payload, rec.weight, out_channels * in_channels * kernel_h * kernel_w, kind, "weight", i)?;
                let bias = tensor(payload, rec.bias, out_channels, kind, "bias", i)?;
                Layer::Conv2d(Conv2d {
                    kernel,
                    bias,
                    in_channels,
                    out_channels,
                    kernel_h,
                    kernel_w,
                    stride,
                    padding,
                })
            }
            "relu" => Layer::Relu,
            "flatten" => Layer::Flatten,
            "avg_pool" => Layer::AvgPool(AvgPool {
                window: field(rec.window, kind, "window", i)?,
                stride: field(rec.stride, kind, "stride", i)?,
            }),
            other => return Err(Error::UnknownLayerType(other.to_string())),
        };
        layers.push(layer);
    }
    Network::new(layers, header.input_shape, header.num_classes)
}

pub fn save_model<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_model(net)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network<f32>> {
    decode_model(&std::fs::read(path)?)
}
