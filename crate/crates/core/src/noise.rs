//! Noise stability of layers and of the whole network.
//!
//! Gaussian noise scaled to the activation norm is injected at `a_{j-1}`;
//! the layer's sensitivity `β_j` is the relative energy of the resulting
//! change in `z_j`, divided by the noise level `ν`:
//!
//! ```text
//! a'_{j-1} = a_{j-1} + sqrt(ν / h_{j-1}) · ‖a_{j-1}‖ · Y,   Y ~ N(0, I)
//! β_j      = ‖z'_j − z_j‖² / (ν ‖z_j‖²)
//! ```
//!
//! The expectation over `Y` is estimated by Monte Carlo with generators
//! keyed on `(seed, example content, layer)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{forward, predict, ActivationTrace, LabeledDataset, Network};
use crate::rng::{content_key, keyed_rng, standard_normal};
use crate::scalar::{dist_sq, norm, norm_sq, Scalar};

/// Stream key used for the output-versus-input variant.
const OUTPUT_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Noise variance ratio `ν`.
    pub nu: f64,
    /// Monte Carlo draws per (example, layer).
    pub num_noise_samples: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            nu: 0.01,
            num_noise_samples: 16,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidConfig(format!("nu must be positive, got {}", self.nu)));
        }
        if self.num_noise_samples == 0 {
            return Err(Error::InvalidConfig("num_noise_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMeasure {
    MeanNoiseStability,
    GeometricMeanNoiseStability,
    MeanNoiseStabilityOutput,
    GeometricMeanNoiseStabilityOutput,
}

impl NoiseMeasure {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseMeasure::MeanNoiseStability => "mean-noise-stability",
            NoiseMeasure::GeometricMeanNoiseStability => "geometric-mean-noise-stability",
            NoiseMeasure::MeanNoiseStabilityOutput => "mean-noise-stability-output",
            NoiseMeasure::GeometricMeanNoiseStabilityOutput => "geometric-mean-noise-stability-output",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseStabilityResult {
    pub measure: NoiseMeasure,
    /// `[n × l]` Monte Carlo means of `β_j(x_i)` (`l = 1` for output variants).
    pub per_layer: Vec<Vec<f64>>,
    pub aggregate: f64,
    pub num_noise_samples: usize,
}

/// `a + sqrt(ν / h) · ‖a‖ · noise`.
pub fn perturb_activation<T: Scalar>(a: &[T], nu: f64, noise: &[T]) -> Vec<T> {
    let scale = (nu / a.len() as f64).sqrt() * norm(a);
    a.iter()
        .zip(noise)
        .map(|(&v, &y)| T::narrow(v.widen() + scale * y.widen()))
        .collect()
}

/// `β_j` for a single noise draw.
pub fn beta_layer_for_draw<T: Scalar>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    j: usize,
    nu: f64,
    noise: &[T],
) -> Result<f64> {
    let a = trace.activation(j.checked_sub(1).ok_or(Error::InvalidLayerIndex {
        index: j,
        num_affine: net.depth(),
    })?)?;
    let z = trace.pre_activation(j)?;
    let z_energy = norm_sq(z);
    if z_energy == 0.0 {
        return Err(Error::ZeroPreActivation { layer: j });
    }
    if noise.len() != a.len() {
        return Err(Error::ShapeMismatch {
            layer: net.affine_layer_index(j)?,
            expected: format!("{} noise values", a.len()),
            found: format!("{}", noise.len()),
        });
    }
    let a_norm = norm(a);
    if a_norm == 0.0 {
        return Ok(0.0);
    }
    let k = net.affine_layer_index(j)?;
    let layer = &net.layers()[k];
    let perturbed = perturb_activation(a, nu, noise);
    let z_perturbed = layer.forward(&perturbed, net.shape_at(k));
    Ok(dist_sq(&z_perturbed, z) / (nu * z_energy))
}

/// Monte Carlo `β_j` drawing from `rng`.
pub fn beta_layer_with_rng<T: Scalar, R: Rng + ?Sized>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    j: usize,
    nu: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let h = net.activation_width(j.saturating_sub(1))?;
    let mut total = 0.0;
    for _ in 0..samples {
        let noise = standard_normal::<T, _>(rng, h);
        total += beta_layer_for_draw(net, trace, j, nu, &noise)?;
    }
    Ok(total / samples as f64)
}

/// Monte Carlo `β_j` with the keyed stream `(seed, x, j)`.
pub fn beta_layer<T: Scalar>(net: &Network<T>, trace: &ActivationTrace<T>, j: usize, cfg: &NoiseConfig) -> Result<f64> {
    cfg.validate()?;
    let mut rng = keyed_rng(cfg.seed, &[content_key(trace.input()), j as u64]);
    beta_layer_with_rng(net, trace, j, cfg.nu, cfg.num_noise_samples, &mut rng)
}

/// Output-versus-input stability for a single draw: the input is perturbed
/// and the full network re-evaluated.
pub fn beta_output_for_draw<T: Scalar>(net: &Network<T>, trace: &ActivationTrace<T>, nu: f64, noise: &[T]) -> Result<f64> {
    let x = trace.input();
    let logits = trace.output();
    let energy = norm_sq(logits);
    if energy == 0.0 {
        return Err(Error::ZeroLogits);
    }
    if norm(x) == 0.0 {
        return Ok(0.0);
    }
    let perturbed = predict(net, &perturb_activation(x, nu, noise))?;
    Ok(dist_sq(&perturbed, logits) / (nu * energy))
}

pub fn beta_output_with_rng<T: Scalar, R: Rng + ?Sized>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    nu: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let d = trace.input().len();
    let mut total = 0.0;
    for _ in 0..samples {
        let noise = standard_normal::<T, _>(rng, d);
        total += beta_output_for_draw(net, trace, nu, &noise)?;
    }
    Ok(total / samples as f64)
}

pub fn beta_output<T: Scalar>(net: &Network<T>, trace: &ActivationTrace<T>, cfg: &NoiseConfig) -> Result<f64> {
    cfg.validate()?;
    let mut rng = keyed_rng(cfg.seed, &[content_key(trace.input()), OUTPUT_STREAM]);
    beta_output_with_rng(net, trace, cfg.nu, cfg.num_noise_samples, &mut rng)
}

fn check_inputs<T: Scalar>(net: &Network<T>, data: &LabeledDataset<T>, cfg: &NoiseConfig) -> Result<()> {
    cfg.validate()?;
    data.check_compatible(net)?;
    if net.depth() == 0 {
        return Err(Error::NoAffineLayers);
    }
    Ok(())
}

/// `[n × l]` matrix of per-layer `β_j(x_i)`, computed in parallel and
/// returned in dataset order.
pub fn layer_stability_matrix<T: Scalar>(
    net: &Network<T>,
    data: &LabeledDataset<T>,
    cfg: &NoiseConfig,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(net, data, cfg)?;
    data.inputs()
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let trace = forward(net, x).map_err(|e| e.at_example(i))?;
            (1..=net.depth())
                .map(|j| beta_layer(net, &trace, j, cfg).map_err(|e| e.at_example(i)))
                .collect()
        })
        .collect()
}

/// `[n × 1]` matrix of output-versus-input `β(x_i)`.
pub fn output_stability_column<T: Scalar>(
    net: &Network<T>,
    data: &LabeledDataset<T>,
    cfg: &NoiseConfig,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(net, data, cfg)?;
    data.inputs()
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let trace = forward(net, x).map_err(|e| e.at_example(i))?;
            Ok(vec![beta_output(net, &trace, cfg).map_err(|e| e.at_example(i))?])
        })
        .collect()
}

/// Arithmetic mean of all entries, reduced in row-major order.
pub fn mean_aggregate(per_layer: &[Vec<f64>]) -> f64 {
    let count: usize = per_layer.iter().map(Vec::len).sum();
    per_layer.iter().flatten().sum::<f64>() / count as f64
}

/// Mean of `log β` over all entries; every entry must be positive.
pub fn log_mean_aggregate(per_layer: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, row) in per_layer.iter().enumerate() {
        for (j, &b) in row.iter().enumerate() {
            if b.is_nan() || b <= 0.0 {
                return Err(Error::NonPositiveBeta { layer: j + 1, value: b }.at_example(i));
            }
            total += b.ln();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn result(measure: NoiseMeasure, per_layer: Vec<Vec<f64>>, aggregate: f64, cfg: &NoiseConfig) -> NoiseStabilityResult {
    NoiseStabilityResult {
        measure,
        per_layer,
        aggregate,
        num_noise_samples: cfg.num_noise_samples,
    }
}

/// `(1 / (n·l)) Σ_i Σ_j β_j(x_i)`.
pub fn mean_noise_stability<T: Scalar>(
    net: &Network<T>,
    data: &LabeledDataset<T>,
    cfg: &NoiseConfig,
) -> Result<NoiseStabilityResult> {
    let m = layer_stability_matrix(net, data, cfg)?;
    let agg = mean_aggregate(&m);
    Ok(result(NoiseMeasure::MeanNoiseStability, m, agg, cfg))
}

/// `(1 / (n·l)) Σ_i Σ_j log β_j(x_i)`, without a closing exponential.
pub fn geometric_mean_noise_stability<T: Scalar>(
    net: &Network<T>,
    data: &LabeledDataset<T>,
    cfg: &NoiseConfig,
) -> Result<NoiseStabilityResult> {
    let m = layer_stability_matrix(net, data, cfg)?;
    let agg = log_mean_aggregate(&m)?;
    Ok(result(NoiseMeasure::GeometricMeanNoiseStability, m, agg, cfg))
}

/// Both per-layer aggregates from one shared set of draws.
pub fn noise_stability_layer_measures<T: Scalar>(
    net: &Network<T>,
    data: &LabeledDataset<T>,
    cfg: &NoiseConfig,
) -> Result<(NoiseStabilityResult, Result<NoiseStabilityResult>)> {
    let m = layer_stability_matrix(net, data, cfg)?;
    let geo = log_mean_aggregate(&m).map(|agg| result(NoiseMeasure::GeometricMeanNoiseStability, m.clone(), agg, cfg));
    let mean = mean_aggregate(&m);
    Ok((result(NoiseMeasure::MeanNoiseStability, m, mean, cfg), geo))
}

/// Mean and log-mean aggregates of the output-versus-input stability, from
/// one shared set of draws.
pub fn noise_stability_output_measures<T: Scalar>(
    net: &Network<T>,
    data: &LabeledDataset<T>,
    cfg: &NoiseConfig,
) -> Result<(NoiseStabilityResult, Result<NoiseStabilityResult>)> {
    let m = output_stability_column(net, data, cfg)?;
    let geo = log_mean_aggregate(&m).map(|agg| result(NoiseMeasure::GeometricMeanNoiseStabilityOutput, m.clone(), agg, cfg));
    let mean = mean_aggregate(&m);
    Ok((result(NoiseMeasure::MeanNoiseStabilityOutput, m, mean, cfg), geo))
}
