//! Central-difference verification of backpropagated gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::Network;
use super::layers::Mode;
use super::{NnError, Tensor};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Finite-difference step `h`.
    pub step: f64,
    pub mode: Mode,
    /// Seeds the random projection that reduces the output to a scalar loss.
    pub seed: u64,
    /// Doubles the analytic gradient of the named tensor (`"node.slot"`) before comparing;
    /// used to confirm the checker notices a broken backward pass.
    pub fault: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-4, mode: Mode::Train, seed: 0, fault: None }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst per-tensor relative error.
    pub max_rel_error: f64,
    /// `(tensor name, relative error)`; the network input is reported as `"input"`.
    pub tensors: Vec<(String, f64)>,
}

/// `max|a - n| / max(1e-12, max(|a| + |n|))` over one tensor.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        diff = diff.max((a - n).abs());
        scale = scale.max(a.abs() + n.abs());
    }
    diff / scale.max(1e-12)
}

fn projected_loss(net: &mut Network<f64>, x: &Tensor<f64>, proj: &[f64], mode: Mode) -> Result<f64, NnError> {
    let out = net.predict(x, mode, 0)?;
    Ok(out.data().iter().zip(proj).map(|(a, b)| a * b).sum())
}

/// Compares backprop against central differences for every trainable parameter and the input,
/// using the loss `sum(output * r)` for a fixed random `r`.
pub fn gradient_check(net: &Network<f64>, input: &Tensor<f64>, opts: &GradCheckOptions) -> Result<GradCheckReport, NnError> {
    if !(opts.step > 0.0) {
        return Err(NnError::Graph(format!("finite-difference step must be positive, got {}", opts.step)));
    }
    let h = opts.step;
    let mut work = net.clone();
    let trace = work.forward(input, opts.mode, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let proj: Vec<f64> = (0..trace.output().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let grad_out = Tensor::new(trace.output().shape().to_vec(), proj.clone())?;
    let grads = work.backward(&trace, &grad_out, true)?;

    let mut tensors = Vec::new();
    for i in 0..net.len() {
        if net.is_frozen(i) {
            continue;
        }
        let names: Vec<&'static str> = net.nodes()[i].layer.params().iter().map(|(n, _)| *n).collect();
        for (slot, name) in names.into_iter().enumerate() {
            let full = format!("{}.{}", net.nodes()[i].name, name);
            let mut analytic = grads.params[i][slot].to_f64_vec();
            if opts.fault.as_deref() == Some(full.as_str()) {
                analytic.iter_mut().for_each(|g| *g *= 2.0);
            }
            let len = analytic.len();
            let mut numeric = Vec::with_capacity(len);
            for k in 0..len {
                let orig = work.node_mut(i).layer.params_mut()[slot].data()[k];
                work.node_mut(i).layer.params_mut()[slot].data_mut()[k] = orig + h;
                let plus = projected_loss(&mut work, input, &proj, opts.mode)?;
                work.node_mut(i).layer.params_mut()[slot].data_mut()[k] = orig - h;
                let minus = projected_loss(&mut work, input, &proj, opts.mode)?;
                work.node_mut(i).layer.params_mut()[slot].data_mut()[k] = orig;
                numeric.push((plus - minus) / (2.0 * h));
            }
            tensors.push((full, relative_error(&analytic, &numeric)));
        }
    }

    let analytic = grads.input.map(|t| t.to_f64_vec()).unwrap_or_default();
    let mut x = input.clone();
    let mut numeric = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let orig = x.data()[k];
        x.data_mut()[k] = orig + h;
        let plus = projected_loss(&mut work, &x, &proj, opts.mode)?;
        x.data_mut()[k] = orig - h;
        let minus = projected_loss(&mut work, &x, &proj, opts.mode)?;
        x.data_mut()[k] = orig;
        numeric.push((plus - minus) / (2.0 * h));
    }
    tensors.push(("input".to_string(), relative_error(&analytic, &numeric)));

    let max_rel_error = tensors.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init::init_network;
    use crate::nn::layers::{Dense, Layer};

    #[test]
    fn dense_layer_passes_and_fault_is_caught() {
        let mut net = Network::<f64>::new(vec![5]);
        net.push("fc", Layer::Dense(Dense::new(5, 3))).unwrap();
        init_network(&mut net, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::new(vec![4, 5], (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let report = gradient_check(&net, &x, &GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");

        let faulty = GradCheckOptions { fault: Some("fc.weight".into()), ..Default::default() };
        let report = gradient_check(&net, &x, &faulty).unwrap();
        assert!(report.max_rel_error > 0.1, "{report:?}");
    }

    #[test]
    fn relative_error_is_scale_free() {
        assert_eq!(relative_error(&[2.0, 0.0], &[1.0, 0.0]), 1.0 / 3.0);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }
}
