//! Hidden-layer and input-space margins.

mod all_layer;
mod input;
mod jacobian;

pub use all_layer::{
    all_layer_margin, flips_prediction, perturbation_loss_gradient, perturbed_forward, AllLayerMargin,
    MarginSolverConfig, PerturbationVector, SolverStatus,
};
pub use input::input_layer_margin;
pub use jacobian::{margin_jacobian, margin_jacobian_from_parts, normalized_jacobian_energy, MarginJacobian};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LabeledDataset, Network};
use crate::rng::keyed_rng;
use crate::scalar::{median, Scalar};

/// Uniform subsample used for the per-example margin measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub size: usize,
    pub seed: u64,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        Self { size: 256, seed: 0 }
    }
}

/// Sorted indices of a seeded uniform subsample without replacement.
pub fn subsample_indices(n: usize, cfg: &SubsampleConfig) -> Vec<usize> {
    if cfg.size >= n {
        return (0..n).collect();
    }
    let mut rng = keyed_rng(cfg.seed, &[0x5ab5_a3b1e, n as u64]);
    let mut idx = index::sample(&mut rng, n, cfg.size).into_vec();
    idx.sort_unstable();
    idx
}

/// Median of a per-example margin over the subsample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginMeasure {
    pub value: f64,
    pub evaluated: usize,
    /// Examples where the solver found no flip (`+∞` entries).
    pub failures: usize,
    pub restarts: usize,
    pub gradient_steps: usize,
}

pub fn input_layer_margin_measure<T: Scalar>(
    net: &Network<T>,
    data: &LabeledDataset<T>,
    sub: &SubsampleConfig,
) -> Result<MarginMeasure> {
    data.check_compatible(net)?;
    let idx = subsample_indices(data.len(), sub);
    // A vanishing gradient difference puts the boundary infinitely far away
    // to first order; such examples count as `+∞` failures.
    let values: Vec<f64> = idx
        .par_iter()
        .map(|&i| match input_layer_margin(net, &data.inputs()[i], data.labels()[i]) {
            Err(Error::DegenerateGradient) => Ok(f64::INFINITY),
            other => other.map_err(|e| e.at_example(i)),
        })
        .collect::<Result<_>>()?;
    Ok(MarginMeasure {
        value: median(&values).unwrap(),
        evaluated: values.len(),
        failures: values.iter().filter(|v| v.is_infinite()).count(),
        restarts: 0,
        gradient_steps: 0,
    })
}

pub fn all_layer_margin_measure<T: Scalar>(
    net: &Network<T>,
    data: &LabeledDataset<T>,
    cfg: &MarginSolverConfig,
    sub: &SubsampleConfig,
) -> Result<MarginMeasure> {
    data.check_compatible(net)?;
    cfg.validate()?;
    let idx = subsample_indices(data.len(), sub);
    let results: Vec<AllLayerMargin<T>> = idx
        .par_iter()
        .map(|&i| all_layer_margin(net, &data.inputs()[i], data.labels()[i], cfg).map_err(|e| e.at_example(i)))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = results.iter().map(|r| r.margin).collect();
    Ok(MarginMeasure {
        value: median(&values).unwrap(),
        evaluated: values.len(),
        failures: results.iter().filter(|r| r.status == SolverStatus::Failed).count(),
        restarts: results.iter().map(|r| r.restarts_run).sum(),
        gradient_steps: results.iter().map(|r| r.gradient_steps).sum(),
    })
}
