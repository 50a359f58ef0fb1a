use serde::{Deserialize, Serialize};

use super::network::{LabeledDataset, Network};
use super::trace::predict;
use crate::error::{Error, Result};
use crate::scalar::{median, Scalar};

/// `logits[y] − max_{y' ≠ y} logits[y']`. Negative when misclassified.
pub fn logit_margin<T: Scalar>(logits: &[T], y: usize) -> Result<f64> {
    if y >= logits.len() {
        return Err(Error::InvalidLabel {
            label: y,
            num_classes: logits.len(),
        });
    }
    if logits.len() < 2 {
        return Err(Error::InvalidConfig("margins need at least two classes".into()));
    }
    let runner_up = logits
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != y)
        .map(|(_, v)| v.widen())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(logits[y].widen() - runner_up)
}

/// Output-layer margin `γ_out` of one example.
pub fn output_margin<T: Scalar>(net: &Network<T>, x: &[T], y: usize) -> Result<f64> {
    logit_margin(&predict(net, x)?, y)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginAggregation {
    #[default]
    Median,
    Mean,
}

/// How per-example output margins are reduced to a single `γ_out`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputMarginConfig {
    pub aggregation: MarginAggregation,
    /// Restrict to correctly classified examples (positive margin).
    pub correct_only: bool,
}

impl Default for OutputMarginConfig {
    fn default() -> Self {
        Self {
            aggregation: MarginAggregation::Median,
            correct_only: true,
        }
    }
}

/// Dataset-level `γ_out`.
pub fn aggregate_output_margin<T: Scalar>(
    net: &Network<T>,
    data: &LabeledDataset<T>,
    cfg: &OutputMarginConfig,
) -> Result<f64> {
    data.check_compatible(net)?;
    let mut margins = Vec::with_capacity(data.len());
    for (i, (x, y)) in data.iter().enumerate() {
        let m = output_margin(net, x, y).map_err(|e| e.at_example(i))?;
        if !cfg.correct_only || m > 0.0 {
            margins.push(m);
        }
    }
    if margins.is_empty() {
        return Err(Error::NoCorrectlyClassified);
    }
    Ok(match cfg.aggregation {
        MarginAggregation::Median => median(&margins).unwrap(),
        MarginAggregation::Mean => margins.iter().sum::<f64>() / margins.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_examples() {
        assert!((logit_margin(&[2.0f64, 0.5, 0.1], 0).unwrap() - 1.5).abs() < 1e-12);
        assert!((logit_margin(&[0.5f64, 2.0], 0).unwrap() + 1.5).abs() < 1e-12);
        assert_eq!(logit_margin(&[0.3f64; 4], 2).unwrap(), 0.0);
    }

    #[test]
    fn margin_rejects_bad_label() {
        assert!(matches!(logit_margin(&[1.0f64, 2.0], 2), Err(Error::InvalidLabel { .. })));
    }
}
