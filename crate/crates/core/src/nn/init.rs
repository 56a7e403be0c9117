use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::Network;
use super::layers::Layer;
use super::{fnv1a64, mix_seed, Scalar, Tensor};

/// He-uniform draws: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub fn he_uniform<T: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, shape: &[usize]) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data length agree")
}

/// The generator for a layer depends only on `(seed, layer name)`, so re-initialising one layer
/// never disturbs the others.
pub fn layer_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(&[seed, fnv1a64(name.as_bytes())]))
}

/// Seeds the weights of one layer: He-uniform conv/dense weights, zero biases,
/// unit batchnorm scale, zero shift and fresh running statistics.
pub fn init_layer<T: Scalar>(layer: &mut Layer<T>, seed: u64, name: &str) {
    let mut rng = layer_rng(seed, name);
    match layer {
        Layer::Conv2d(c) => {
            let fan_in = c.in_channels * c.kernel * c.kernel;
            c.weight = he_uniform(&mut rng, fan_in, &c.weight.shape().to_vec());
            if let Some(b) = &mut c.bias {
                b.data_mut().fill(T::zero());
            }
        }
        Layer::Dense(d) => {
            d.weight = he_uniform(&mut rng, d.in_features, &d.weight.shape().to_vec());
            d.bias.data_mut().fill(T::zero());
        }
        Layer::BatchNorm(b) => {
            b.gamma.data_mut().fill(T::one());
            b.beta.data_mut().fill(T::zero());
            b.running_mean.data_mut().fill(T::zero());
            b.running_var.data_mut().fill(T::one());
        }
        Layer::Dropout(d) => d.seed = mix_seed(&[seed, fnv1a64(name.as_bytes())]),
        _ => {}
    }
}

pub fn init_network<T: Scalar>(net: &mut Network<T>, seed: u64) {
    for i in 0..net.len() {
        let node = net.node_mut(i);
        let name = node.name.clone();
        init_layer(&mut node.layer, seed, &name);
    }
}
