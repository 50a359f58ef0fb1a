//! Matrix-free spectral norms and the `fast-log-spec` measure.
//!
//! Layer operators expose only `apply` and `adjoint`; the power method on
//! `AᵀA` never materializes a weight matrix, so convolution layers cost a
//! handful of convolutions per iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv::{conv2d_forward, conv2d_transpose, ConvGeometry};
use crate::nn::{aggregate_output_margin, Conv2d, Dense, LabeledDataset, Layer, Network, OutputMarginConfig, Shape};
use crate::rng::{keyed_rng, standard_normal};
use crate::scalar::{norm, Scalar};

/// A linear map over flattened vectors together with its transpose.
pub trait LinearOperator<T: Scalar> {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply(&self, v: &[T]) -> Vec<T>;
    fn adjoint(&self, v: &[T]) -> Vec<T>;
}

/// Boxed operator handle as produced by [`layer_operator`].
pub type LinearOperatorHandle<'a, T> = Box<dyn LinearOperator<T> + Send + Sync + 'a>;

pub struct DenseOperator<'a, T> {
    layer: &'a Dense<T>,
}

impl<'a, T: Scalar> DenseOperator<'a, T> {
    pub fn new(layer: &'a Dense<T>) -> Self {
        Self { layer }
    }
}

impl<T: Scalar> LinearOperator<T> for DenseOperator<'_, T> {
    fn in_dim(&self) -> usize {
        self.layer.in_dim
    }
    fn out_dim(&self) -> usize {
        self.layer.out_dim
    }
    fn apply(&self, v: &[T]) -> Vec<T> {
        self.layer.matvec(v)
    }
    fn adjoint(&self, v: &[T]) -> Vec<T> {
        self.layer.matvec_t(v)
    }
}

/// Bias-free convolution; the adjoint is the transposed convolution.
pub struct ConvOperator<'a, T> {
    kernel: &'a [T],
    geometry: ConvGeometry,
}

impl<T: Scalar> ConvOperator<'_, T> {
    pub fn geometry(&self) -> &ConvGeometry {
        &self.geometry
    }

    /// Scalars held by the operator (the kernel only).
    pub fn storage_len(&self) -> usize {
        self.kernel.len()
    }
}

impl<T: Scalar> LinearOperator<T> for ConvOperator<'_, T> {
    fn in_dim(&self) -> usize {
        self.geometry.in_len()
    }
    fn out_dim(&self) -> usize {
        self.geometry.out_len()
    }
    fn apply(&self, v: &[T]) -> Vec<T> {
        conv2d_forward(self.kernel, &self.geometry, v)
    }
    fn adjoint(&self, v: &[T]) -> Vec<T> {
        conv2d_transpose(self.kernel, &self.geometry, v)
    }
}

pub fn conv_operator<T: Scalar>(layer: &Conv2d<T>, input_shape: Shape) -> Result<ConvOperator<'_, T>> {
    let geometry = layer.geometry(input_shape).ok_or_else(|| Error::ShapeMismatch {
        layer: 0,
        expected: format!("feature map with {} channels fitting a {}x{} kernel", layer.in_channels, layer.kernel_h, layer.kernel_w),
        found: input_shape.to_string(),
    })?;
    if layer.kernel.len() != geometry.kernel_len() {
        return Err(Error::InvalidNetwork("conv kernel size does not match its declared shape".into()));
    }
    Ok(ConvOperator {
        kernel: &layer.kernel,
        geometry,
    })
}

/// Operator of affine layer `j` (1-based) of `net`.
pub fn layer_operator<T: Scalar>(net: &Network<T>, j: usize) -> Result<LinearOperatorHandle<'_, T>> {
    let k = net.affine_layer_index(j)?;
    match &net.layers()[k] {
        Layer::Dense(d) => Ok(Box::new(DenseOperator::new(d))),
        Layer::Conv2d(c) => Ok(Box::new(conv_operator(c, net.shape_at(k))?)),
        _ => unreachable!("affine index points at an affine layer"),
    }
}

/// Operator built from closures.
pub struct FnOperator<F, G> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub apply: F,
    pub adjoint: G,
}

impl<T, F, G> LinearOperator<T> for FnOperator<F, G>
where
    T: Scalar,
    F: Fn(&[T]) -> Vec<T>,
    G: Fn(&[T]) -> Vec<T>,
{
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn apply(&self, v: &[T]) -> Vec<T> {
        (self.apply)(v)
    }
    fn adjoint(&self, v: &[T]) -> Vec<T> {
        (self.adjoint)(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerMethodConfig {
    pub max_iters: usize,
    /// Stop when successive estimates differ by less than this, relatively.
    pub rel_tolerance: f64,
    pub seed: u64,
}

impl Default for PowerMethodConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            rel_tolerance: 1e-5,
            seed: 0,
        }
    }
}

impl PowerMethodConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rel_tolerance must lie in (0, 1), got {}",
                self.rel_tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerMethodResult {
    /// Estimated largest singular value.
    pub sigma: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Rayleigh quotients `‖A v_k‖²` of `AᵀA`, one per iteration.
    pub rayleigh_history: Vec<f64>,
}

const ZERO_OPERATOR_RESEEDS: u64 = 3;

/// Largest singular value of `op` by power iteration on `AᵀA`.
pub fn spectral_norm<T: Scalar>(op: &dyn LinearOperator<T>, cfg: &PowerMethodConfig) -> Result<PowerMethodResult> {
    cfg.validate()?;
    if op.in_dim() == 0 {
        return Err(Error::InvalidConfig("operator has an empty domain".into()));
    }
    // Seeded start vector; reseed if it lands in the null space.
    let mut start = None;
    for attempt in 0..=ZERO_OPERATOR_RESEEDS {
        let mut rng = keyed_rng(cfg.seed, &[0x9_0e4, attempt]);
        let mut v = standard_normal::<T, _>(&mut rng, op.in_dim());
        normalize(&mut v);
        if norm(&op.apply(&v)) > 0.0 {
            start = Some(v);
            break;
        }
    }
    let Some(mut v) = start else {
        return Ok(PowerMethodResult {
            sigma: 0.0,
            iterations: 0,
            converged: true,
            rayleigh_history: Vec::new(),
        });
    };

    let mut history = Vec::new();
    let mut prev_sigma: Option<f64> = None;
    for it in 1..=cfg.max_iters {
        let av = op.apply(&v);
        let rayleigh = crate::scalar::norm_sq(&av);
        history.push(rayleigh);
        let sigma = rayleigh.sqrt();
        let mut w = op.adjoint(&av);
        if !normalize(&mut w) {
            return Ok(PowerMethodResult {
                sigma,
                iterations: it,
                converged: true,
                rayleigh_history: history,
            });
        }
        if let Some(p) = prev_sigma {
            if (sigma - p).abs() <= cfg.rel_tolerance * sigma {
                return Ok(PowerMethodResult {
                    sigma,
                    iterations: it,
                    converged: true,
                    rayleigh_history: history,
                });
            }
        }
        prev_sigma = Some(sigma);
        v = w;
    }
    Ok(PowerMethodResult {
        sigma: history.last().copied().unwrap_or(0.0).sqrt(),
        iterations: cfg.max_iters,
        converged: false,
        rayleigh_history: history,
    })
}

fn normalize<T: Scalar>(v: &mut [T]) -> bool {
    let n = norm(v);
    if !(n > 0.0 && n.is_finite()) {
        return false;
    }
    for x in v.iter_mut() {
        *x = T::narrow(x.widen() / n);
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FastLogSpec {
    pub value: f64,
    pub gamma_out: f64,
    /// Spectral norm of each affine layer.
    pub layer_norms: Vec<f64>,
    pub iterations: Vec<usize>,
    /// False when some power iteration hit `max_iters`.
    pub converged: bool,
}

/// `(1 − 1/l) Σ_i log ‖W_i‖₂² − log γ_out²`.
pub fn fast_log_spec_from_parts(layer_norms: &[f64], gamma_out: f64) -> f64 {
    let l = layer_norms.len() as f64;
    let sum: f64 = layer_norms.iter().map(|s| (s * s).ln()).sum();
    (1.0 - 1.0 / l) * sum - (gamma_out * gamma_out).ln()
}

pub fn fast_log_spec<T: Scalar>(
    net: &Network<T>,
    data: &LabeledDataset<T>,
    power: &PowerMethodConfig,
    margin: &OutputMarginConfig,
) -> Result<FastLogSpec> {
    power.validate()?;
    if net.depth() == 0 {
        return Err(Error::NoAffineLayers);
    }
    let gamma = aggregate_output_margin(net, data, margin)?;
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::NonPositiveMargin(gamma));
    }
    let results: Vec<PowerMethodResult> = (1..=net.depth())
        .into_par_iter()
        .map(|j| spectral_norm(layer_operator(net, j)?.as_ref(), power))
        .collect::<Result<_>>()?;
    if let Some(j) = results.iter().position(|r| r.sigma == 0.0) {
        return Err(Error::ZeroSpectralNorm { layer: j + 1 });
    }
    let converged = results.iter().all(|r| r.converged);
    if !converged {
        log::warn!("power method did not converge for every layer; using last estimates");
    }
    let layer_norms: Vec<f64> = results.iter().map(|r| r.sigma).collect();
    Ok(FastLogSpec {
        value: fast_log_spec_from_parts(&layer_norms, gamma),
        gamma_out: gamma,
        iterations: results.iter().map(|r| r.iterations).collect(),
        layer_norms,
        converged,
    })
}
