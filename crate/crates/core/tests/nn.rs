mod common;

use common::*;
use gengap_core::nn::conv::{conv2d_forward, conv2d_transpose, ConvGeometry};
use gengap_core::nn::{forward, jacobian_frobenius_sq, param_grads, predict, vjp, Layer, Network, Wrt};
use proptest::prelude::*;
use rand::Rng;

/// Textbook convolution over an explicitly zero-padded copy of the input.
fn naive_conv(layer: &gengap_core::nn::Conv2d<f64>, c: usize, h: usize, w: usize, x: &[f64]) -> Vec<f64> {
    let p = layer.padding;
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut padded = vec![0.0; c * ph * pw];
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                padded[(ch * ph + i + p) * pw + j + p] = x[(ch * h + i) * w + j];
            }
        }
    }
    let (kh, kw, s) = (layer.kernel_h, layer.kernel_w, layer.stride);
    let oh = (ph - kh) / s + 1;
    let ow = (pw - kw) / s + 1;
    let mut out = Vec::new();
    for o in 0..layer.out_channels {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = layer.bias[o];
                for ch in 0..c {
                    for a in 0..kh {
                        for b in 0..kw {
                            acc += layer.kernel[((o * c + ch) * kh + a) * kw + b] * padded[(ch * ph + i * s + a) * pw + j * s + b];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

#[test]
fn conv_matches_naive_loop() {
    let mut r = rng(1);
    for _ in 0..40 {
        let c = r.random_range(1..=3);
        let h = r.random_range(3..=8);
        let w = r.random_range(3..=8);
        let k = r.random_range(1..=3);
        let stride = r.random_range(1..=2);
        let padding = r.random_range(0..=1);
        let out_c = r.random_range(1..=4);
        let layer = conv(&mut r, c, out_c, k, stride, padding);
        let x = gaussian(&mut r, c * h * w, 1.0);
        let shape = gengap_core::Shape::Map { channels: c, height: h, width: w };
        let got = Layer::Conv2d(layer.clone()).forward(&x, shape);
        let want = naive_conv(&layer, c, h, w, &x);
        assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_transpose_is_adjoint() {
    let mut r = rng(2);
    for _ in 0..40 {
        let c = r.random_range(1..=3);
        let o = r.random_range(1..=3);
        let k = r.random_range(1..=3);
        let g = ConvGeometry::new(c, r.random_range(3..=7), r.random_range(3..=7), o, k, k, r.random_range(1..=2), r.random_range(0..=1)).unwrap();
        let kernel = gaussian(&mut r, g.kernel_len(), 1.0);
        let x = gaussian(&mut r, g.in_len(), 1.0);
        let y = gaussian(&mut r, g.out_len(), 1.0);
        let ax = conv2d_forward(&kernel, &g, &x);
        let aty = conv2d_transpose(&kernel, &g, &y);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }
}

/// Network made of the layers from `position` onwards.
fn tail(net: &Network<f64>, position: usize) -> Network<f64> {
    Network::new(net.layers()[position..].to_vec(), net.shape_at(position), net.num_classes()).unwrap()
}

fn fd_vjp(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], cotangent: &[f64]) -> Vec<f64> {
    let eps = 1e-6;
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += eps;
            xm[i] -= eps;
            let (fp, fm) = (f(&xp), f(&xm));
            fp.iter().zip(&fm).zip(cotangent).map(|((a, b), c)| c * (a - b) / (2.0 * eps)).sum()
        })
        .collect()
}

fn assert_close(got: &[f64], want: &[f64], tol: f64) {
    let scale = want.iter().map(|v| v.abs()).fold(1.0, f64::max);
    for (a, b) in got.iter().zip(want) {
        assert!((a - b).abs() <= tol * scale, "got {got:?}, want {want:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn vjp_matches_finite_differences(seed in 0u64..10_000, use_cnn in any::<bool>()) {
        let mut r = rng(seed);
        let net = if use_cnn { small_cnn(&mut r) } else { random_mlp(&mut r) };
        let x = gaussian(&mut r, net.input_shape().len(), 1.0);
        let cot = gaussian(&mut r, net.num_classes(), 1.0);
        let trace = forward(&net, &x).unwrap();
        let got = vjp(&net, &trace, &cot, Wrt::Input).unwrap();
        let want = fd_vjp(|v| predict(&net, v).unwrap(), &x, &cot);
        assert_close(&got, &want, 1e-5);

        for j in 0..=net.depth() {
            let pos = net.activation_position(j).unwrap();
            let a = trace.layer_value(pos).to_vec();
            let got = vjp(&net, &trace, &cot, Wrt::Activation(j)).unwrap();
            let want = if j == net.depth() {
                cot.clone()
            } else {
                let rest = tail(&net, pos);
                fd_vjp(|v| predict(&rest, v).unwrap(), &a, &cot)
            };
            assert_close(&got, &want, 1e-5);
        }
    }

    #[test]
    fn jacobian_energy_matches_materialized_jacobian(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let net = random_mlp(&mut r);
        let x = gaussian(&mut r, net.input_shape().len(), 1.0);
        let trace = forward(&net, &x).unwrap();
        let mut want = 0.0;
        for k in 0..net.num_classes() {
            let mut e = vec![0.0; net.num_classes()];
            e[k] = 1.0;
            want += fd_vjp(|v| predict(&net, v).unwrap(), &x, &e).iter().map(|g| g * g).sum::<f64>();
        }
        let got = jacobian_frobenius_sq(&net, &trace, Wrt::Input).unwrap();
        prop_assert!(rel_err(got, want) < 1e-5);
    }

    #[test]
    fn bias_free_relu_nets_are_positively_homogeneous(seed in 0u64..10_000, c in 0.1f64..10.0) {
        let mut r = rng(seed);
        let mut net = random_mlp(&mut r);
        let layers: Vec<Layer<f64>> = net.layers().iter().cloned().map(|l| match l {
            Layer::Dense(mut d) => { d.bias.iter_mut().for_each(|b| *b = 0.0); Layer::Dense(d) }
            other => other,
        }).collect();
        net = Network::new(layers, net.input_shape(), net.num_classes()).unwrap();
        let x = gaussian(&mut r, net.input_shape().len(), 1.0);
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let fx = predict(&net, &x).unwrap();
        let fcx = predict(&net, &cx).unwrap();
        for (a, b) in fx.iter().zip(&fcx) {
            prop_assert!((c * a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn param_grads_match_finite_differences() {
    let mut r = rng(5);
    let net = small_cnn(&mut r);
    let x = gaussian(&mut r, net.input_shape().len(), 1.0);
    let cot = gaussian(&mut r, net.num_classes(), 1.0);
    let trace = forward(&net, &x).unwrap();
    let grads = param_grads(&net, &trace, &cot).unwrap();
    let objective = |n: &Network<f64>| -> f64 { predict(n, &x).unwrap().iter().zip(&cot).map(|(a, b)| a * b).sum() };
    let eps = 1e-6;
    for (k, g) in grads.iter().enumerate() {
        let Some(g) = g else {
            assert!(!net.layers()[k].is_affine());
            continue;
        };
        for (which, len) in [(0, g.weight.len()), (1, g.bias.len())] {
            for idx in [0, len / 2, len - 1] {
                let bump = |delta: f64| {
                    let mut layers = net.layers().to_vec();
                    let (w, b) = match &mut layers[k] {
                        Layer::Dense(d) => (&mut d.weight, &mut d.bias),
                        Layer::Conv2d(c) => (&mut c.kernel, &mut c.bias),
                        _ => unreachable!(),
                    };
                    if which == 0 { w[idx] += delta } else { b[idx] += delta }
                    Network::new(layers, net.input_shape(), net.num_classes()).unwrap()
                };
                let fd = (objective(&bump(eps)) - objective(&bump(-eps))) / (2.0 * eps);
                let got = if which == 0 { g.weight[idx] } else { g.bias[idx] };
                assert!((got - fd).abs() < 1e-5 * (1.0 + fd.abs()), "layer {k} param {which}/{idx}: {got} vs {fd}");
            }
        }
    }
}

#[test]
fn f32_and_f64_agree() {
    let mut r = rng(6);
    let net = small_cnn(&mut r);
    let x = gaussian(&mut r, net.input_shape().len(), 1.0);
    let net32: Network<f32> = net.cast();
    let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
    let a = predict(&net, &x).unwrap();
    let b = predict(&net32, &x32).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p - *q as f64).abs() < 1e-4 * (1.0 + p.abs()));
    }
}
