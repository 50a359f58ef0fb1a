use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{aggregate_output_margin, forward, jacobian_frobenius_sq_all, LabeledDataset, Network, OutputMarginConfig};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginJacobian {
    pub value: f64,
    pub gamma_out: f64,
    /// `(l / γ_out²)^(1/l)`.
    pub margin_term: f64,
    /// Depth- and margin-normalized mean Jacobian energy.
    pub jacobian_term: f64,
}

/// `Σ_{j=1..l} ‖∂f(x)/∂a_j‖²_F / (d_l · d_j)` for one example.
pub fn normalized_jacobian_energy<T: Scalar>(net: &Network<T>, x: &[T]) -> Result<f64> {
    let trace = forward(net, x)?;
    let energies = jacobian_frobenius_sq_all(net, &trace)?;
    let d_out = net.num_classes() as f64;
    let mut total = 0.0;
    for (j, e) in energies.iter().enumerate().skip(1) {
        total += e / (d_out * net.activation_width(j)? as f64);
    }
    Ok(total)
}

/// Combines the output margin with the average Jacobian norm:
///
/// ```text
/// (l / γ²)^(1/l) + Σ_i Σ_j ‖∂f(x_i)/∂a_j‖²_F / (d_l d_j)  /  (n l² γ)
/// ```
pub fn margin_jacobian<T: Scalar>(
    net: &Network<T>,
    data: &LabeledDataset<T>,
    margin_cfg: &OutputMarginConfig,
) -> Result<MarginJacobian> {
    if net.depth() == 0 {
        return Err(Error::NoAffineLayers);
    }
    let gamma = aggregate_output_margin(net, data, margin_cfg)?;
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::NonPositiveMargin(gamma));
    }
    let per_example: Vec<f64> = data
        .inputs()
        .par_iter()
        .enumerate()
        .map(|(i, x)| normalized_jacobian_energy(net, x).map_err(|e| e.at_example(i)))
        .collect::<Result<_>>()?;
    Ok(margin_jacobian_from_parts(
        net.depth(),
        gamma,
        per_example.iter().sum(),
        data.len(),
    ))
}

/// Evaluates the formula from its ingredients; `energy_sum` is the double
/// sum over examples and layers.
pub fn margin_jacobian_from_parts(depth: usize, gamma_out: f64, energy_sum: f64, n: usize) -> MarginJacobian {
    let l = depth as f64;
    let margin_term = (l / (gamma_out * gamma_out)).powf(1.0 / l);
    let jacobian_term = energy_sum / (n as f64 * l * l * gamma_out);
    MarginJacobian {
        value: margin_term + jacobian_term,
        gamma_out,
        margin_term,
        jacobian_term,
    }
}
