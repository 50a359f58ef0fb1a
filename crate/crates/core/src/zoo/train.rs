use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{forward, param_grads, predict, Dense, LabeledDataset, Layer, Network, Shape};
use crate::rng::{keyed_rng, standard_normal};
use crate::scalar::{argmax, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Number of affine layers; depth 1 is a linear classifier.
    pub depth: usize,
    pub width: usize,
    pub seed: u64,
    pub target_train_accuracy: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 16,
            learning_rate: 0.05,
            depth: 2,
            width: 32,
            seed: 0,
            target_train_accuracy: 0.99,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.depth == 0 || self.width == 0 {
            return Err(Error::InvalidConfig("epochs, batch_size, depth and width must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.target_train_accuracy > 0.0 && self.target_train_accuracy <= 1.0) {
            return Err(Error::InvalidConfig("target_train_accuracy must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

const STREAM_INIT: u64 = 11;
const STREAM_SHUFFLE: u64 = 12;

/// ReLU MLP with `depth` affine layers, Gaussian init with variance
/// `2 / fan_in` and zero biases.
pub fn init_mlp<T: Scalar>(input_dim: usize, num_classes: usize, depth: usize, width: usize, seed: u64) -> Result<Network<T>> {
    let mut rng = keyed_rng(seed, &[STREAM_INIT]);
    let mut layers = Vec::with_capacity(2 * depth);
    let mut fan_in = input_dim;
    for j in 1..=depth {
        let fan_out = if j == depth { num_classes } else { width };
        let std = (2.0 / fan_in as f64).sqrt();
        let weight: Vec<T> = standard_normal::<f64, _>(&mut rng, fan_in * fan_out)
            .into_iter()
            .map(|v| T::narrow(v * std))
            .collect();
        layers.push(Layer::Dense(Dense::new(weight, vec![T::zero(); fan_out], fan_in, fan_out)));
        if j < depth {
            layers.push(Layer::Relu);
        }
        fan_in = fan_out;
    }
    Network::new(layers, Shape::Vector(input_dim), num_classes)
}

/// Fraction of misclassified examples (first-index argmax).
pub fn error_rate<T: Scalar>(net: &Network<T>, data: &LabeledDataset<T>) -> Result<f64> {
    let mut wrong = 0usize;
    for (x, y) in data.iter() {
        if argmax(&predict(net, x)?) != y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel<T> {
    pub network: Network<T>,
    pub train_error: f64,
    pub test_error: f64,
    pub epochs_run: usize,
    /// False when the epoch budget ran out before the target accuracy.
    pub reached_target: bool,
}

/// Minibatch SGD on cross-entropy, stopping at the target training accuracy
/// or the epoch budget. Deterministic for a fixed seed.
pub fn train_model<T: Scalar>(
    train: &LabeledDataset<T>,
    test: &LabeledDataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    let Shape::Vector(input_dim) = train.input_shape() else {
        return Err(Error::InvalidDataset("the MLP trainer needs vector inputs".into()));
    };
    let mut net = init_mlp::<T>(input_dim, train.num_classes(), cfg.depth, cfg.width, cfg.seed)?;
    train.check_compatible(&net)?;
    test.check_compatible(&net)?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs_run = 0;
    let mut train_error = error_rate(&net, train)?;
    while epochs_run < cfg.epochs && 1.0 - train_error < cfg.target_train_accuracy {
        let mut rng = keyed_rng(cfg.seed, &[STREAM_SHUFFLE, epochs_run as u64]);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            sgd_step(&mut net, train, batch, cfg.learning_rate)?;
        }
        epochs_run += 1;
        train_error = error_rate(&net, train)?;
    }
    let reached_target = 1.0 - train_error >= cfg.target_train_accuracy;
    if !reached_target {
        log::warn!(
            "depth {} width {} seed {}: train accuracy {:.3} below target {:.3} after {} epochs",
            cfg.depth,
            cfg.width,
            cfg.seed,
            1.0 - train_error,
            cfg.target_train_accuracy,
            epochs_run
        );
    }
    Ok(TrainedModel {
        test_error: error_rate(&net, test)?,
        network: net,
        train_error,
        epochs_run,
        reached_target,
    })
}

fn sgd_step<T: Scalar>(net: &mut Network<T>, data: &LabeledDataset<T>, batch: &[usize], lr: f64) -> Result<()> {
    let mut acc: Vec<Option<(Vec<f64>, Vec<f64>)>> = net
        .layers()
        .iter()
        .map(|l| l.params().map(|(w, b)| (vec![0.0; w.len()], vec![0.0; b.len()])))
        .collect();
    for &i in batch {
        let trace = forward(net, &data.inputs()[i])?;
        let cotangent = softmax_minus_onehot(trace.output(), data.labels()[i]);
        for (slot, g) in acc.iter_mut().zip(param_grads(net, &trace, &cotangent)?) {
            if let (Some((aw, ab)), Some(g)) = (slot.as_mut(), g) {
                for (a, v) in aw.iter_mut().zip(&g.weight) {
                    *a += v.widen();
                }
                for (a, v) in ab.iter_mut().zip(&g.bias) {
                    *a += v.widen();
                }
            }
        }
    }
    let scale = lr / batch.len() as f64;
    for (layer, slot) in net.layers_mut().iter_mut().zip(acc) {
        if let (Some((w, b)), Some((gw, gb))) = (layer.params_mut(), slot) {
            for (p, g) in w.iter_mut().zip(gw).chain(b.iter_mut().zip(gb)) {
                *p = T::narrow(p.widen() - scale * g);
            }
        }
    }
    Ok(())
}

fn softmax_minus_onehot<T: Scalar>(logits: &[T], y: usize) -> Vec<T> {
    let max = logits.iter().map(|v| v.widen()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v.widen() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter()
        .enumerate()
        .map(|(k, e)| T::narrow(e / total - if k == y { 1.0 } else { 0.0 }))
        .collect()
}
