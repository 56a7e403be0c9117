mod oracles;

use proptest::prelude::*;
use prostapipe::nn::init::init_network;
use prostapipe::nn::{
    gradient_check, softmax_cross_entropy, BatchNorm, Conv2d, Dense, Dropout, GradCheckOptions, Layer, Mode, Network,
    OptimizerKind, OptimizerState, Pool2d, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOLERANCE: f64 = 1e-5;

fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Replaces every parameter with random values so that affine batchnorm terms are exercised too.
fn randomize(net: &mut Network<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..net.len() {
        for p in net.node_mut(i).layer.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.8..0.8));
        }
    }
}

fn check(net: &Network<f64>, x: &Tensor<f64>, fault: &str) {
    let report = gradient_check(net, x, &GradCheckOptions::default()).unwrap();
    assert!(report.max_rel_error < TOLERANCE, "{:?}", report.tensors);
    if !fault.is_empty() {
        let opts = GradCheckOptions { fault: Some(fault.into()), ..Default::default() };
        let report = gradient_check(net, x, &opts).unwrap();
        assert!(report.max_rel_error > 0.1, "fault in {fault} went unnoticed: {:?}", report.tensors);
    }
}

fn single(layer: Layer<f64>, input: &[usize], seed: u64) -> Network<f64> {
    let mut net = Network::new(input.to_vec());
    net.push("layer", layer).unwrap();
    randomize(&mut net, seed);
    net
}

#[test]
fn conv_gradients() {
    for (k, s, p, bias) in [(3, 1, 1, true), (3, 2, 0, false), (1, 1, 0, true), (2, 2, 1, true)] {
        let net = single(Layer::Conv2d(Conv2d::new(2, 3, k, s, p, bias)), &[2, 5, 5], 1);
        check(&net, &random_tensor(&[2, 2, 5, 5], 2), "layer.weight");
    }
}

#[test]
fn dense_gradients() {
    let net = single(Layer::Dense(Dense::new(6, 4)), &[6], 3);
    check(&net, &random_tensor(&[3, 6], 4), "layer.bias");
}

#[test]
fn batchnorm_gradients_in_both_modes() {
    let mut net = single(Layer::BatchNorm(BatchNorm::new(3)), &[3, 2, 2], 5);
    check(&net, &random_tensor(&[4, 3, 2, 2], 6), "layer.gamma");
    if let Layer::BatchNorm(bn) = &mut net.node_mut(1).layer {
        bn.running_mean.data_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        bn.running_var.data_mut().copy_from_slice(&[0.5, 1.5, 2.0]);
    }
    let opts = GradCheckOptions { mode: Mode::Eval, ..Default::default() };
    let report = gradient_check(&net, &random_tensor(&[4, 3, 2, 2], 7), &opts).unwrap();
    assert!(report.max_rel_error < TOLERANCE, "{:?}", report.tensors);
}

#[test]
fn parameter_free_layer_gradients() {
    let cases: Vec<(Layer<f64>, Vec<usize>)> = vec![
        (Layer::Relu, vec![3, 4, 4]),
        (Layer::MaxPool(Pool2d { kernel: 2, stride: 2 }), vec![2, 4, 4]),
        (Layer::MaxPool(Pool2d { kernel: 3, stride: 2 }), vec![2, 5, 5]),
        (Layer::AvgPool(Pool2d { kernel: 2, stride: 2 }), vec![2, 4, 4]),
        (Layer::GlobalAvgPool, vec![3, 3, 3]),
        (Layer::Dropout(Dropout { rate: 0.4, seed: 9 }), vec![3, 4, 4]),
        (Layer::Softmax, vec![5]),
    ];
    for (i, (layer, shape)) in cases.into_iter().enumerate() {
        let net = single(layer, &shape, 8);
        let mut full = vec![2];
        full.extend(&shape);
        check(&net, &random_tensor(&full, 100 + i as u64), "");
    }
}

#[test]
fn concat_and_scaled_sum_gradients() {
    let mut net = Network::<f64>::new(vec![2, 3, 3]);
    let a = net.add("a", Layer::Conv2d(Conv2d::new(2, 2, 1, 1, 0, true)), &[0]).unwrap();
    let b = net.add("b", Layer::Conv2d(Conv2d::new(2, 3, 3, 1, 1, true)), &[0]).unwrap();
    let cat = net.add("cat", Layer::Concat, &[a, b]).unwrap();
    let proj = net.add("proj", Layer::Conv2d(Conv2d::new(5, 2, 1, 1, 0, true)), &[cat]).unwrap();
    net.add("sum", Layer::ResidualScaleAdd { scale: 0.3 }, &[0, proj]).unwrap();
    randomize(&mut net, 10);
    check(&net, &random_tensor(&[2, 2, 3, 3], 11), "b.weight");
}

fn cbr(net: &mut Network<f64>, name: &str, from: usize, cin: usize, cout: usize, k: usize) -> usize {
    let c = net.add(format!("{name}.conv"), Layer::Conv2d(Conv2d::new(cin, cout, k, 1, k / 2, false)), &[from]).unwrap();
    let b = net.add(format!("{name}.bn"), Layer::BatchNorm(BatchNorm::new(cout)), &[c]).unwrap();
    net.add(format!("{name}.relu"), Layer::Relu, &[b]).unwrap()
}

/// Three-branch residual-inception block: 1x1, 1x1 -> 3x3, 1x1 -> 3x3 -> 3x3, concatenated,
/// projected back by a 1x1 convolution, scaled and added to the shortcut.
fn inception_residual_block(c: usize, width: usize, scale: f64) -> Network<f64> {
    let mut net = Network::new(vec![c, 4, 4]);
    let b0 = cbr(&mut net, "b0", 0, c, width, 1);
    let b1 = cbr(&mut net, "b1a", 0, c, width, 1);
    let b1 = cbr(&mut net, "b1b", b1, width, width, 3);
    let b2 = cbr(&mut net, "b2a", 0, c, width, 1);
    let b2 = cbr(&mut net, "b2b", b2, width, width, 3);
    let b2 = cbr(&mut net, "b2c", b2, width, width, 3);
    let cat = net.add("concat", Layer::Concat, &[b0, b1, b2]).unwrap();
    let proj = net.add("proj", Layer::Conv2d(Conv2d::new(3 * width, c, 1, 1, 0, true)), &[cat]).unwrap();
    let sum = net.add("add", Layer::ResidualScaleAdd { scale }, &[0, proj]).unwrap();
    net.add("relu", Layer::Relu, &[sum]).unwrap();
    net
}

#[test]
fn full_residual_inception_block_gradients() {
    let mut net = inception_residual_block(3, 2, 0.2);
    randomize(&mut net, 12);
    check(&net, &random_tensor(&[3, 3, 4, 4], 13), "b2b.conv.weight");
}

#[test]
fn plain_residual_block_gradients() {
    let mut net = Network::<f64>::new(vec![3, 4, 4]);
    let h = cbr(&mut net, "c0", 0, 3, 3, 3);
    let c = net.add("c1", Layer::Conv2d(Conv2d::new(3, 3, 3, 1, 1, false)), &[h]).unwrap();
    let b = net.add("bn1", Layer::BatchNorm(BatchNorm::new(3)), &[c]).unwrap();
    let s = net.add("add", Layer::ResidualScaleAdd { scale: 1.0 }, &[0, b]).unwrap();
    net.add("relu", Layer::Relu, &[s]).unwrap();
    randomize(&mut net, 14);
    check(&net, &random_tensor(&[2, 3, 4, 4], 15), "bn1.beta");
}

#[test]
fn zero_scale_block_is_relu_of_its_input() {
    let mut net = inception_residual_block(3, 2, 0.0);
    randomize(&mut net, 16);
    let x = random_tensor(&[2, 3, 4, 4], 17);
    let y = net.predict(&x, Mode::Eval, 0).unwrap();
    let want: Vec<f64> = x.data().iter().map(|v| v.max(0.0)).collect();
    assert_eq!(y.data(), &want[..]);
}

fn conv_case() -> impl Strategy<Value = (usize, usize, usize, usize, usize, usize, usize, usize, bool, u64)> {
    (1usize..=4, 1usize..=3, 1usize..=8, 1usize..=8, 1usize..=4, 1usize..=3, 1usize..=2, 0usize..=1, any::<bool>(), any::<u64>())
        .prop_filter("kernel must fit", |&(_, _, h, w, _, k, _, p, _, _)| h + 2 * p >= k && w + 2 * p >= k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn conv_matches_direct_loops((n, c, h, w, o, k, s, p, bias, seed) in conv_case()) {
        let mut conv = Conv2d::<f64>::new(c, o, k, s, p, bias);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        conv.weight.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        if let Some(b) = &mut conv.bias {
            b.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        }
        let x = random_tensor(&[n, c, h, w], seed ^ 1);
        let got = conv.forward(&x).unwrap();
        let (want, oh, ow) = oracles::conv_loops(
            x.data(), (n, c, h, w), conv.weight.data(), conv.bias.as_ref().map(|b| b.data()), o, k, s, p,
        );
        prop_assert_eq!(got.shape(), &[n, o, oh, ow][..]);
        for (a, b) in got.data().iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}

fn small_classifier() -> Network<f32> {
    let mut net = Network::new(vec![1, 6, 6]);
    net.push("conv0", Layer::Conv2d(Conv2d::new(1, 4, 3, 1, 1, false))).unwrap();
    net.push("bn0", Layer::BatchNorm(BatchNorm::new(4))).unwrap();
    net.push("relu0", Layer::Relu).unwrap();
    net.push("conv1", Layer::Conv2d(Conv2d::new(4, 4, 3, 2, 1, true))).unwrap();
    net.push("bn1", Layer::BatchNorm(BatchNorm::new(4))).unwrap();
    net.push("pool", Layer::GlobalAvgPool).unwrap();
    net.push("fc", Layer::Dense(Dense::new(4, 2))).unwrap();
    net
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frozen_nodes_never_change(seed in any::<u64>(), depth in 1usize..=6, adam in any::<bool>()) {
        let mut net = small_classifier();
        init_network(&mut net, seed);
        for i in 1..=depth {
            net.set_frozen(i, true);
        }
        let before: Vec<_> = (1..=depth).map(|i| net.nodes()[i].layer.clone()).collect();
        let head = net.nodes()[7].layer.clone();
        let kind = if adam { OptimizerKind::adam(0.05) } else { OptimizerKind::sgd(0.1, 0.9) };
        let mut opt = OptimizerState::new(kind);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for step in 0..4 {
            let x = Tensor::new(vec![5, 1, 6, 6], (0..180).map(|_| rng.gen_range(0.0..1.0f32)).collect()).unwrap();
            let y: Vec<usize> = (0..5).map(|_| rng.gen_range(0..2)).collect();
            let trace = net.forward(&x, Mode::Train, step).unwrap();
            let (_, grad) = softmax_cross_entropy(trace.output(), &y).unwrap();
            let grads = net.backward(&trace, &grad, false).unwrap();
            opt.step(&mut net, &grads).unwrap();
        }
        for (i, layer) in (1..=depth).zip(&before) {
            prop_assert_eq!(&net.nodes()[i].layer, layer);
        }
        prop_assert_ne!(&net.nodes()[7].layer, &head);
    }
}
