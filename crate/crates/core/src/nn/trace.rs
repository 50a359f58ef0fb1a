use super::network::Network;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Every intermediate tensor of one forward pass.
///
/// `outputs[0]` is the input `x` and `outputs[k + 1]` the output of layer
/// `k`. Pre-activations `z_j` and activations `a_j` are views into it.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTrace<T> {
    outputs: Vec<Vec<T>>,
    affine: Vec<usize>,
}

impl<T: Scalar> ActivationTrace<T> {
    pub fn input(&self) -> &[T] {
        &self.outputs[0]
    }

    /// Logits `f(x)`.
    pub fn output(&self) -> &[T] {
        self.outputs.last().expect("trace always holds the input")
    }

    /// Output of layer `k`'s input side: `layer_value(k)` is what layer `k`
    /// consumed, `layer_value(num_layers)` the logits.
    pub fn layer_value(&self, position: usize) -> &[T] {
        &self.outputs[position]
    }

    pub fn num_affine(&self) -> usize {
        self.affine.len()
    }

    /// `z_j` for `j = 1..=l`.
    pub fn pre_activation(&self, j: usize) -> Result<&[T]> {
        self.check(j, 1)?;
        Ok(&self.outputs[self.affine[j - 1] + 1])
    }

    /// `a_j` for `j = 0..=l`: the tensor entering affine layer `j + 1`, or
    /// the logits for `j = l`.
    pub fn activation(&self, j: usize) -> Result<&[T]> {
        self.check(j, 0)?;
        Ok(if j == self.affine.len() {
            self.output()
        } else {
            &self.outputs[self.affine[j]]
        })
    }

    pub fn pre_activations(&self) -> Vec<&[T]> {
        self.affine.iter().map(|&k| self.outputs[k + 1].as_slice()).collect()
    }

    pub fn activations(&self) -> Vec<&[T]> {
        (0..=self.affine.len()).map(|j| self.activation(j).unwrap()).collect()
    }

    fn check(&self, j: usize, lo: usize) -> Result<()> {
        if j < lo || j > self.affine.len() {
            return Err(Error::InvalidLayerIndex {
                index: j,
                num_affine: self.affine.len(),
            });
        }
        Ok(())
    }
}

/// Runs `net` on `x`, recording every intermediate tensor.
pub fn forward<T: Scalar>(net: &Network<T>, x: &[T]) -> Result<ActivationTrace<T>> {
    check_input(net, x)?;
    let mut outputs = Vec::with_capacity(net.layers().len() + 1);
    outputs.push(x.to_vec());
    for (k, layer) in net.layers().iter().enumerate() {
        let next = layer.forward(&outputs[k], net.shape_at(k));
        outputs.push(next);
    }
    let affine = (1..=net.depth()).map(|j| net.affine_layer_index(j).unwrap()).collect();
    Ok(ActivationTrace { outputs, affine })
}

/// Logits only.
pub fn predict<T: Scalar>(net: &Network<T>, x: &[T]) -> Result<Vec<T>> {
    check_input(net, x)?;
    let mut cur = x.to_vec();
    for (k, layer) in net.layers().iter().enumerate() {
        cur = layer.forward(&cur, net.shape_at(k));
    }
    Ok(cur)
}

fn check_input<T: Scalar>(net: &Network<T>, x: &[T]) -> Result<()> {
    let expected = net.input_shape();
    if x.len() != expected.len() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: format!("{expected} ({} values)", expected.len()),
            found: format!("{} values", x.len()),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}
