//! Reverse-mode differentiation through a recorded [`ActivationTrace`].

use super::layer::ParamGrad;
use super::network::Network;
use super::trace::ActivationTrace;
use crate::error::{Error, Result};
use crate::scalar::{norm_sq, Scalar};

/// Where a vector-Jacobian product is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wrt {
    /// The raw network input `x`.
    Input,
    /// Activation `a_j`, `j = 0..=l` (`a_0` is the input as seen by the first
    /// affine layer, `a_l` the logits).
    Activation(usize),
}

fn check_cotangent<T: Scalar>(net: &Network<T>, cotangent: &[T]) -> Result<()> {
    if cotangent.len() != net.num_classes() {
        return Err(Error::InvalidCotangent {
            expected: net.num_classes(),
            found: cotangent.len(),
        });
    }
    Ok(())
}

/// Pulls `grad` from layer-output position `from` back to position `to`.
fn pull_back<T: Scalar>(net: &Network<T>, trace: &ActivationTrace<T>, mut grad: Vec<T>, from: usize, to: usize) -> Vec<T> {
    for k in (to..from).rev() {
        grad = net.layers()[k].backward_input(trace.layer_value(k), net.shape_at(k), &grad);
    }
    grad
}

/// `cotangentᵀ · ∂f/∂(wrt)` at the traced point.
pub fn vjp<T: Scalar>(net: &Network<T>, trace: &ActivationTrace<T>, cotangent: &[T], wrt: Wrt) -> Result<Vec<T>> {
    check_cotangent(net, cotangent)?;
    let target = match wrt {
        Wrt::Input => 0,
        Wrt::Activation(j) => net.activation_position(j)?,
    };
    Ok(pull_back(net, trace, cotangent.to_vec(), net.layers().len(), target))
}

/// Vector-Jacobian products at every activation `a_0..=a_l` from a single
/// backward sweep.
pub fn vjp_all<T: Scalar>(net: &Network<T>, trace: &ActivationTrace<T>, cotangent: &[T]) -> Result<Vec<Vec<T>>> {
    check_cotangent(net, cotangent)?;
    let l = net.depth();
    let mut grads = vec![Vec::new(); l + 1];
    let mut grad = cotangent.to_vec();
    let mut pos = net.layers().len();
    for j in (0..=l).rev() {
        let target = net.activation_position(j)?;
        grad = pull_back(net, trace, grad, pos, target);
        pos = target;
        grads[j] = grad.clone();
    }
    Ok(grads)
}

/// `‖∂f/∂(wrt)‖²_F`, assembled row by row from `vjp(e_k)`.
pub fn jacobian_frobenius_sq<T: Scalar>(net: &Network<T>, trace: &ActivationTrace<T>, wrt: Wrt) -> Result<f64> {
    let mut e = vec![T::zero(); net.num_classes()];
    let mut total = 0.0;
    for k in 0..net.num_classes() {
        e[k] = T::one();
        total += norm_sq(&vjp(net, trace, &e, wrt)?);
        e[k] = T::zero();
    }
    Ok(total)
}

/// `‖∂f/∂a_j‖²_F` for every `j = 0..=l`.
pub fn jacobian_frobenius_sq_all<T: Scalar>(net: &Network<T>, trace: &ActivationTrace<T>) -> Result<Vec<f64>> {
    let mut totals = vec![0.0; net.depth() + 1];
    let mut e = vec![T::zero(); net.num_classes()];
    for k in 0..net.num_classes() {
        e[k] = T::one();
        for (t, g) in totals.iter_mut().zip(vjp_all(net, trace, &e)?) {
            *t += norm_sq(&g);
        }
        e[k] = T::zero();
    }
    Ok(totals)
}

/// Gradient of `⟨cotangent, f⟩` with respect to every layer's parameters
/// (`None` for parameter-free layers).
pub fn param_grads<T: Scalar>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    cotangent: &[T],
) -> Result<Vec<Option<ParamGrad<T>>>> {
    check_cotangent(net, cotangent)?;
    let layers = net.layers();
    let mut out = vec![None; layers.len()];
    let mut grad = cotangent.to_vec();
    for k in (0..layers.len()).rev() {
        let input = trace.layer_value(k);
        out[k] = layers[k].backward_params(input, net.shape_at(k), &grad);
        if k > 0 {
            grad = layers[k].backward_input(input, net.shape_at(k), &grad);
        }
    }
    Ok(out)
}
