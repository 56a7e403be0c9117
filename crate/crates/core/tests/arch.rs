use prostapipe::arch::{batchnorm_after_sum, build_model, registry, ArchSpec, Variant};
use prostapipe::nn::{gradient_check, GradCheckOptions, Mode, Tensor};
use prostapipe::transfer::freeze_prefix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Conv (no bias) + batchnorm affine terms.
fn conv_bn(cin: usize, cout: usize, k: usize) -> usize {
    cin * cout * k * k + 2 * cout
}

fn width(base: usize, m: f64) -> usize {
    ((base as f64 * m + 0.5).floor() as usize).max(1)
}

/// Parameter count written out layer by layer from the block definitions.
fn expected_params(spec: &ArchSpec) -> usize {
    let m = spec.width_multiplier;
    let (w16, w32) = (width(16, m), width(32, m));
    let mut total = conv_bn(spec.input_channels, w16, 3) + conv_bn(w16, w32, 3);
    let mut c = w32;
    for (i, &count) in spec.block_counts.iter().enumerate() {
        let base = 32 * (i + 1);
        let b = width(base / 2, m);
        if i > 0 {
            if spec.variant == Variant::MiniResnet {
                total += conv_bn(c, width(base, m), 3);
                c = width(base, m);
            } else {
                total += conv_bn(c, b, 3);
                c += b;
            }
        }
        for _ in 0..count {
            match spec.variant {
                Variant::MiniInceptionResnetV2 => {
                    total += 3 * conv_bn(c, b, 1) + 3 * conv_bn(b, b, 3) + 3 * b * c + c;
                }
                Variant::MiniInceptionV3 => {
                    total += 3 * conv_bn(c, b, 1) + 3 * conv_bn(b, b, 3);
                    c = 3 * b;
                }
                Variant::MiniResnet => total += 2 * conv_bn(c, c, 3),
            }
        }
    }
    total + c * spec.n_classes + spec.n_classes
}

#[test]
fn parameter_counts_follow_the_block_definitions() {
    for &variant in registry() {
        for m in [0.25, 0.5, 1.0, 1.5] {
            for blocks in [vec![1], vec![2, 2], vec![1, 2, 1]] {
                for n_classes in [2, 4] {
                    let spec = ArchSpec { variant, width_multiplier: m, block_counts: blocks.clone(), n_classes, ..ArchSpec::default() };
                    let model = build_model::<f32>(&spec, 0).unwrap();
                    assert_eq!(model.param_count(), expected_params(&spec), "{variant} m={m} blocks={blocks:?}");
                }
            }
        }
    }
}

#[test]
fn batchnorm_never_follows_a_residual_sum() {
    for &variant in registry() {
        let model = build_model::<f32>(&ArchSpec::new(variant), 0).unwrap();
        assert!(batchnorm_after_sum(&model.net).is_empty());
    }
}

fn random_input(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

#[test]
fn zero_scaled_frozen_blocks_pass_their_input_through() {
    let spec = ArchSpec { residual_scale: 0.0, input_height: 32, input_width: 32, width_multiplier: 0.5, ..ArchSpec::default() };
    let mut model = build_model::<f64>(&spec, 3).unwrap();
    let layers = model.layer_count();
    freeze_prefix(&mut model, layers).unwrap();
    let trace = model.net.forward(&random_input(&[2, 1, 32, 32], 4), Mode::Train, 0).unwrap();
    assert_eq!(model.blocks.len(), 4);
    for block in &model.blocks {
        let input = &trace.outputs[block.input];
        let want: Vec<f64> = input.data().iter().map(|v| v.max(0.0)).collect();
        assert_eq!(trace.outputs[block.output].data(), &want[..], "{}", block.name);
    }
}

#[test]
fn whole_network_gradients_for_every_variant() {
    for &variant in registry() {
        let spec = ArchSpec {
            variant,
            input_height: 16,
            input_width: 16,
            width_multiplier: 0.125,
            block_counts: vec![1, 1],
            ..ArchSpec::default()
        };
        let net = build_model::<f64>(&spec, 5).unwrap().net;
        // Dozens of stacked ReLU/max-pool kinks: a 1e-4 step crosses some of them, so use a finer one.
        let opts = GradCheckOptions { step: 1e-6, ..Default::default() };
        let report = gradient_check(&net, &random_input(&[4, 1, 16, 16], 6), &opts).unwrap();
        assert!(report.max_rel_error < 1e-5, "{variant}: {:?}", report.tensors);
    }
}
