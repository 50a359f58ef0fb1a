use crate::error::{Error, Result};
use crate::nn::{forward, logit_margin, vjp, Network, Wrt};
use crate::scalar::{norm, Scalar};

/// Gradient-difference norms below this are treated as a flat boundary.
const DEGENERATE_GRADIENT: f64 = 1e-12;

/// First-order distance from `x` to the nearest decision boundary:
///
/// ```text
/// min_{y' ≠ y} (f_y − f_{y'}) / ‖∇_x f_y − ∇_x f_{y'}‖
/// ```
///
/// Exact for affine networks. Returns 0 when `x` is misclassified or on a
/// boundary.
pub fn input_layer_margin<T: Scalar>(net: &Network<T>, x: &[T], y: usize) -> Result<f64> {
    let trace = forward(net, x)?;
    let logits = trace.output();
    if logit_margin(logits, y)? <= 0.0 {
        return Ok(0.0);
    }
    let mut best: Option<f64> = None;
    let mut cotangent = vec![T::zero(); logits.len()];
    for other in (0..logits.len()).filter(|&k| k != y) {
        cotangent[y] = T::one();
        cotangent[other] = -T::one();
        let grad = vjp(net, &trace, &cotangent, Wrt::Input)?;
        cotangent[other] = T::zero();
        let g = norm(&grad);
        if g < DEGENERATE_GRADIENT {
            continue;
        }
        let d = ((logits[y].widen() - logits[other].widen()) / g).max(0.0);
        best = Some(best.map_or(d, |b| b.min(d)));
    }
    best.ok_or(Error::DegenerateGradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer, Shape};

    fn linear(rows: &[Vec<f64>], bias: Vec<f64>) -> Network<f64> {
        let k = rows.len();
        let d = rows[0].len();
        Network::new(vec![Layer::Dense(Dense::from_rows(rows, bias))], Shape::Vector(d), k).unwrap()
    }

    #[test]
    fn linear_two_class() {
        let net = linear(&[vec![1.0, 0.0], vec![-1.0, 0.0]], vec![0.0, 0.0]);
        let m = input_layer_margin(&net, &[1.0, 0.0], 0).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_and_misclassified_give_zero() {
        let net = linear(&[vec![1.0, 0.0], vec![-1.0, 0.0]], vec![0.0, 0.0]);
        assert_eq!(input_layer_margin(&net, &[0.0, 3.0], 0).unwrap(), 0.0);
        assert_eq!(input_layer_margin(&net, &[1.0, 0.0], 1).unwrap(), 0.0);
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let net = linear(&[vec![1.0, 2.0], vec![1.0, 2.0]], vec![1.0, 0.0]);
        assert!(matches!(input_layer_margin(&net, &[0.5, 0.5], 0), Err(Error::DegenerateGradient)));
    }
}
