#![allow(dead_code)]

use gengap_core::nn::{AvgPool, Conv2d, Dense, LabeledDataset, Layer, Network, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| { let z: f64 = StandardNormal.sample(rng); std * z }).collect::<Vec<f64>>()
}

pub fn dense(rng: &mut impl Rng, in_dim: usize, out_dim: usize) -> Layer<f64> {
    let std = (2.0 / in_dim as f64).sqrt();
    Layer::Dense(Dense::new(gaussian(rng, in_dim * out_dim, std), gaussian(rng, out_dim, 0.1), in_dim, out_dim))
}

/// ReLU MLP over the given widths (input first, classes last).
pub fn mlp(rng: &mut impl Rng, widths: &[usize]) -> Network<f64> {
    let mut layers = Vec::new();
    for (k, w) in widths.windows(2).enumerate() {
        layers.push(dense(rng, w[0], w[1]));
        if k + 2 < widths.len() {
            layers.push(Layer::Relu);
        }
    }
    Network::new(layers, Shape::Vector(widths[0]), *widths.last().unwrap()).unwrap()
}

pub fn random_mlp(rng: &mut impl Rng) -> Network<f64> {
    let depth = rng.random_range(1..=4);
    let mut widths = vec![rng.random_range(2..=6)];
    for _ in 1..depth {
        widths.push(rng.random_range(3..=8));
    }
    widths.push(rng.random_range(2..=4));
    mlp(rng, &widths)
}

pub fn conv(rng: &mut impl Rng, in_c: usize, out_c: usize, k: usize, stride: usize, padding: usize) -> Conv2d<f64> {
    let std = (2.0 / (in_c * k * k) as f64).sqrt();
    Conv2d {
        kernel: gaussian(rng, out_c * in_c * k * k, std),
        bias: gaussian(rng, out_c, 0.1),
        in_channels: in_c,
        out_channels: out_c,
        kernel_h: k,
        kernel_w: k,
        stride,
        padding,
    }
}

/// conv → relu → avgpool → conv → relu → flatten → dense.
pub fn small_cnn(rng: &mut impl Rng) -> Network<f64> {
    let layers = vec![
        Layer::Conv2d(conv(rng, 2, 3, 3, 1, 1)),
        Layer::Relu,
        Layer::AvgPool(AvgPool { window: 2, stride: 2 }),
        Layer::Conv2d(conv(rng, 3, 4, 2, 1, 0)),
        Layer::Relu,
        Layer::Flatten,
        dense(rng, 4 * 2 * 2, 3),
    ];
    Network::new(layers, Shape::Map { channels: 2, height: 6, width: 6 }, 3).unwrap()
}

pub fn random_dataset(rng: &mut impl Rng, net: &Network<f64>, n: usize) -> LabeledDataset<f64> {
    let d = net.input_shape().len();
    let inputs = (0..n).map(|_| gaussian(rng, d, 1.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..net.num_classes())).collect();
    LabeledDataset::new(inputs, labels, net.input_shape(), net.num_classes()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
