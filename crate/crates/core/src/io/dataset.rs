use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{decode_container, encode_container, read_f32, read_u32, validate_layout, PayloadWriter, TensorRef, DATASET_MAGIC, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::nn::{LabeledDataset, Shape};
use crate::scalar::Scalar;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    format_version: u32,
    input_shape: Shape,
    num_classes: usize,
    num_examples: usize,
    payload_bytes: usize,
    /// Row-major `num_examples × input_len` f32 matrix.
    inputs: TensorRef,
    /// `num_examples` u32 labels.
    labels: TensorRef,
}

pub fn encode_dataset<T: Scalar>(data: &LabeledDataset<T>) -> Result<Vec<u8>> {
    let mut payload = PayloadWriter::default();
    let n = data.len();
    let width = data.input_shape().len();
    let inputs = payload.push_f32(
        data.inputs()
            .iter()
            .flat_map(|x| x.iter().map(|v| v.widen() as f32))
            .collect::<Vec<_>>()
            .into_iter(),
    );
    debug_assert_eq!(inputs.len, n * width);
    let labels = data
        .labels()
        .iter()
        .map(|&y| u32::try_from(y).map_err(|_| Error::Format(format!("label {y} does not fit in 32 bits"))))
        .collect::<Result<Vec<u32>>>()?;
    let labels = payload.push_u32(labels.into_iter());
    let payload = payload.into_bytes();
    let header = DatasetHeader {
        format_version: FORMAT_VERSION,
        input_shape: data.input_shape(),
        num_classes: data.num_classes(),
        num_examples: n,
        payload_bytes: payload.len(),
        inputs,
        labels,
    };
    encode_container(DATASET_MAGIC, &json!(header), &payload)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<LabeledDataset<f32>> {
    let (header, payload) = decode_container(DATASET_MAGIC, bytes)?;
    let h: DatasetHeader = serde_json::from_value(header)?;
    validate_layout(
        &[("inputs".to_string(), h.inputs), ("labels".to_string(), h.labels)],
        payload.len(),
    )?;
    let width = h.input_shape.len();
    if h.inputs.len != h.num_examples * width || h.labels.len != h.num_examples {
        return Err(Error::Format(format!(
            "{} examples of width {width} need {} inputs and {} labels, header declares {} and {}",
            h.num_examples,
            h.num_examples * width,
            h.num_examples,
            h.inputs.len,
            h.labels.len
        )));
    }
    let flat = read_f32(payload, h.inputs);
    let inputs = if width == 0 {
        vec![Vec::new(); h.num_examples]
    } else {
        flat.chunks_exact(width).map(<[f32]>::to_vec).collect()
    };
    let labels = read_u32(payload, h.labels).into_iter().map(|y| y as usize).collect();
    LabeledDataset::new(inputs, labels, h.input_shape, h.num_classes)
}

pub fn save_dataset<T: Scalar>(data: &LabeledDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_dataset(data)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset<f32>> {
    decode_dataset(&std::fs::read(path)?)
}
