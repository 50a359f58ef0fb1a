//! Network representation, forward pass with activation capture, and
//! reverse-mode Jacobian products.

mod backward;
pub mod conv;
mod layer;
mod margin;
mod network;
mod trace;

pub use backward::{jacobian_frobenius_sq, jacobian_frobenius_sq_all, param_grads, vjp, vjp_all, Wrt};
pub use layer::{AvgPool, Conv2d, Dense, Layer, ParamGrad, Shape};
pub use margin::{aggregate_output_margin, logit_margin, output_margin, MarginAggregation, OutputMarginConfig};
pub use network::{LabeledDataset, Network};
pub use trace::{forward, predict, ActivationTrace};

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[f64]], bias: &[f64]) -> Layer<f64> {
        Layer::Dense(Dense::from_rows(
            &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            bias.to_vec(),
        ))
    }

    #[test]
    fn identity_forward() {
        let net = Network::new(vec![Layer::Dense(Dense::identity(2))], Shape::Vector(2), 2).unwrap();
        let t = forward(&net, &[3.0, 4.0]).unwrap();
        assert_eq!(t.pre_activation(1).unwrap(), &[3.0, 4.0]);
        assert_eq!(t.output(), &[3.0, 4.0]);
    }

    #[test]
    fn two_layer_hand_case() {
        let net = Network::new(
            vec![dense(&[&[1.0, 0.0], &[0.0, 1.0]], &[1.0, -1.0]), Layer::Relu, dense(&[&[1.0, 1.0]], &[0.0])],
            Shape::Vector(2),
            1,
        )
        .unwrap();
        let t = forward(&net, &[0.0, 0.0]).unwrap();
        assert_eq!(t.pre_activation(1).unwrap(), &[1.0, -1.0]);
        assert_eq!(t.activation(1).unwrap(), &[1.0, 0.0]);
        assert_eq!(t.output(), &[1.0]);
        assert_eq!(t.activations().len(), 3);
    }

    #[test]
    fn input_shape_mismatch_names_layer() {
        let net = Network::new(vec![Layer::Dense(Dense::<f64>::identity(2))], Shape::Vector(2), 2).unwrap();
        match forward(&net, &[1.0, 2.0, 3.0]) {
            Err(Error::ShapeMismatch { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(forward(&net, &[f64::NAN, 0.0]), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn construction_rejects_bad_networks() {
        let bad_compose = Network::new(
            vec![Layer::Dense(Dense::<f64>::identity(2)), Layer::Dense(Dense::identity(3))],
            Shape::Vector(2),
            3,
        );
        assert!(matches!(bad_compose, Err(Error::InvalidNetwork(msg)) if msg.contains("layer 1")));
        let bad_classes = Network::new(vec![Layer::Dense(Dense::<f64>::identity(2))], Shape::Vector(2), 3);
        assert!(bad_classes.is_err());
        let mut d = Dense::<f64>::identity(2);
        d.weight[1] = f64::INFINITY;
        assert!(matches!(
            Network::new(vec![Layer::Dense(d)], Shape::Vector(2), 2),
            Err(Error::NonFiniteWeight { layer: 0 })
        ));
        let trailing_relu = Network::new(vec![Layer::Dense(Dense::<f64>::identity(2)), Layer::Relu], Shape::Vector(2), 2);
        assert!(trailing_relu.is_err());
    }

    #[test]
    fn linear_vjp_is_weight_row() {
        let net = Network::new(vec![dense(&[&[1.0, 2.0], &[3.0, 4.0]], &[0.5, 0.5])], Shape::Vector(2), 2).unwrap();
        let t = forward(&net, &[0.3, -0.7]).unwrap();
        assert_eq!(vjp(&net, &t, &[0.0, 1.0], Wrt::Input).unwrap(), vec![3.0, 4.0]);
        assert_eq!(vjp(&net, &t, &[1.0, 0.0], Wrt::Activation(0)).unwrap(), vec![1.0, 2.0]);
        // a_l is the logits: identity Jacobian
        assert_eq!(vjp(&net, &t, &[0.2, 0.4], Wrt::Activation(1)).unwrap(), vec![0.2, 0.4]);
        assert!(matches!(vjp(&net, &t, &[1.0, 0.0], Wrt::Activation(2)), Err(Error::InvalidLayerIndex { .. })));
        assert!(matches!(vjp(&net, &t, &[1.0], Wrt::Input), Err(Error::InvalidCotangent { .. })));
    }

    #[test]
    fn vjp_at_last_hidden_activation_is_transposed_weight() {
        let net = Network::new(
            vec![
                dense(&[&[1.0, -1.0], &[0.5, 2.0], &[0.0, 1.0]], &[0.1, 0.2, 0.3]),
                Layer::Relu,
                dense(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]], &[0.0, 0.0]),
            ],
            Shape::Vector(2),
            2,
        )
        .unwrap();
        let t = forward(&net, &[1.0, 1.0]).unwrap();
        let g = vjp(&net, &t, &[1.0, -1.0], Wrt::Activation(1)).unwrap();
        assert_eq!(g, vec![-3.0, -3.0, -3.0]);
    }

    #[test]
    fn jacobian_frobenius_examples() {
        let net = Network::new(vec![dense(&[&[1.0, 2.0], &[3.0, 4.0]], &[0.0, 0.0])], Shape::Vector(2), 2).unwrap();
        let t = forward(&net, &[1.0, 1.0]).unwrap();
        assert_eq!(jacobian_frobenius_sq(&net, &t, Wrt::Input).unwrap(), 30.0);
        let id = Network::new(vec![Layer::Dense(Dense::<f64>::identity(5))], Shape::Vector(5), 5).unwrap();
        let t = forward(&id, &[1.0; 5]).unwrap();
        assert_eq!(jacobian_frobenius_sq(&id, &t, Wrt::Input).unwrap(), 5.0);
        assert_eq!(jacobian_frobenius_sq_all(&id, &t).unwrap(), vec![5.0, 5.0]);
    }

    #[test]
    fn output_margin_aggregation() {
        let net = Network::new(vec![Layer::Dense(Dense::<f64>::identity(2))], Shape::Vector(2), 2).unwrap();
        let data = LabeledDataset::new(
            vec![vec![3.0, 0.0], vec![2.0, 1.0], vec![0.0, 5.0], vec![1.0, 3.0]],
            vec![0, 0, 1, 0],
            Shape::Vector(2),
            2,
        )
        .unwrap();
        // margins 3, 1, 5, -2
        let median = aggregate_output_margin(&net, &data, &OutputMarginConfig::default()).unwrap();
        assert_eq!(median, 3.0);
        let mean_all = aggregate_output_margin(
            &net,
            &data,
            &OutputMarginConfig {
                aggregation: MarginAggregation::Mean,
                correct_only: false,
            },
        )
        .unwrap();
        assert_eq!(mean_all, 7.0 / 4.0);
    }

    use crate::error::Error;
}
