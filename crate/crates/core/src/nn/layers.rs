use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::Conv2d;
use super::{mix_seed, NnError, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Input,
    Conv2d,
    BatchNorm,
    Dense,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    Relu,
    Dropout,
    Softmax,
    Concat,
    ResidualScaleAdd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: f64,
    /// Fraction of the running statistics kept at each training step.
    pub momentum: f64,
}

impl<T: Scalar> BatchNorm<T> {
    pub const DEFAULT_EPSILON: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.9;

    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Tensor::filled(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], T::one()),
            epsilon: Self::DEFAULT_EPSILON,
            momentum: Self::DEFAULT_MOMENTUM,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out, in]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: Tensor::zeros(&[out_features, in_features]),
            bias: Tensor::zeros(&[out_features]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool2d {
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    /// Graph entry; holds the per-sample `[C, H, W]` (or `[F]`) shape.
    Input(Vec<usize>),
    Conv2d(Conv2d<T>),
    BatchNorm(BatchNorm<T>),
    Dense(Dense<T>),
    MaxPool(Pool2d),
    AvgPool(Pool2d),
    GlobalAvgPool,
    Relu,
    Dropout(Dropout),
    Softmax,
    /// Channel-axis concatenation of all inputs.
    Concat,
    /// `inputs[0] + scale * inputs[1]`
    ResidualScaleAdd { scale: f64 },
}

/// Per-node values saved by the forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub enum Cache<T> {
    #[default]
    None,
    BatchNorm { xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    MaxPool { argmax: Vec<usize> },
    Dropout { mask: Vec<T> },
}

/// Gradients produced by one node's backward pass.
pub struct LayerGrads<T> {
    pub inputs: Vec<Option<Tensor<T>>>,
    pub params: Vec<Tensor<T>>,
}

fn shape_err<S: Into<String>>(msg: S) -> NnError {
    NnError::Shape(msg.into())
}

fn expect_rank4(shape: &[usize], what: &str) -> Result<(), NnError> {
    if shape.len() != 4 {
        return Err(shape_err(format!("{what} expects [N,C,H,W], got {shape:?}")));
    }
    Ok(())
}

fn pool_dims(shape: &[usize], p: &Pool2d) -> Result<(usize, usize), NnError> {
    expect_rank4(shape, "pooling")?;
    if p.kernel == 0 || p.stride == 0 || shape[2] < p.kernel || shape[3] < p.kernel {
        return Err(shape_err(format!("pool {}x{} stride {} does not fit {shape:?}", p.kernel, p.kernel, p.stride)));
    }
    Ok(((shape[2] - p.kernel) / p.stride + 1, (shape[3] - p.kernel) / p.stride + 1))
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Input(_) => LayerKind::Input,
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::MaxPool(_) => LayerKind::MaxPool,
            Layer::AvgPool(_) => LayerKind::AvgPool,
            Layer::GlobalAvgPool => LayerKind::GlobalAvgPool,
            Layer::Relu => LayerKind::Relu,
            Layer::Dropout(_) => LayerKind::Dropout,
            Layer::Softmax => LayerKind::Softmax,
            Layer::Concat => LayerKind::Concat,
            Layer::ResidualScaleAdd { .. } => LayerKind::ResidualScaleAdd,
        }
    }

    /// Trainable parameters with their slot names.
    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv2d(c) => {
                let mut v = vec![("weight", &c.weight)];
                if let Some(b) = &c.bias {
                    v.push(("bias", b));
                }
                v
            }
            Layer::BatchNorm(b) => vec![("gamma", &b.gamma), ("beta", &b.beta)],
            Layer::Dense(d) => vec![("weight", &d.weight), ("bias", &d.bias)],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d(c) => {
                let mut v = vec![&mut c.weight];
                if let Some(b) = &mut c.bias {
                    v.push(b);
                }
                v
            }
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state that is still persisted (batchnorm running statistics).
    pub fn buffers(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::BatchNorm(b) => vec![("running_mean", &b.running_mean), ("running_var", &b.running_var)],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::BatchNorm(b) => vec![&mut b.running_mean, &mut b.running_var],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Output shape for the given input shapes (batch axis included).
    pub fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, NnError> {
        let arity = match self {
            Layer::Input(_) => 0,
            Layer::Concat => inputs.len().max(1),
            Layer::ResidualScaleAdd { .. } => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(shape_err(format!("{:?} takes {arity} input(s), got {}", self.kind(), inputs.len())));
        }
        match self {
            Layer::Input(s) => Ok(s.clone()),
            Layer::Conv2d(c) => c.output_shape(inputs[0]),
            Layer::BatchNorm(b) => {
                let s = inputs[0];
                if s.len() < 2 || s[1] != b.channels {
                    return Err(shape_err(format!("batchnorm over {} channels got {s:?}", b.channels)));
                }
                Ok(s.to_vec())
            }
            Layer::Dense(d) => {
                let s = inputs[0];
                if s.len() < 2 || s[1..].iter().product::<usize>() != d.in_features {
                    return Err(shape_err(format!("dense expects {} features, got {s:?}", d.in_features)));
                }
                Ok(vec![s[0], d.out_features])
            }
            Layer::MaxPool(p) | Layer::AvgPool(p) => {
                let (oh, ow) = pool_dims(inputs[0], p)?;
                Ok(vec![inputs[0][0], inputs[0][1], oh, ow])
            }
            Layer::GlobalAvgPool => {
                expect_rank4(inputs[0], "global average pooling")?;
                Ok(vec![inputs[0][0], inputs[0][1]])
            }
            Layer::Relu | Layer::Dropout(_) => Ok(inputs[0].to_vec()),
            Layer::Softmax => {
                if inputs[0].len() != 2 {
                    return Err(shape_err(format!("softmax expects [N,K], got {:?}", inputs[0])));
                }
                Ok(inputs[0].to_vec())
            }
            Layer::Concat => {
                let first = inputs[0];
                if first.len() < 2 {
                    return Err(shape_err(format!("concat needs a channel axis, got {first:?}")));
                }
                let mut out = first.to_vec();
                out[1] = 0;
                for s in inputs {
                    if s.len() != first.len() || s[0] != first[0] || s[2..] != first[2..] {
                        return Err(shape_err(format!("concat of {first:?} and {s:?}")));
                    }
                    out[1] += s[1];
                }
                Ok(out)
            }
            Layer::ResidualScaleAdd { .. } => {
                if inputs[0] != inputs[1] {
                    return Err(shape_err(format!("residual add of {:?} and {:?}", inputs[0], inputs[1])));
                }
                Ok(inputs[0].to_vec())
            }
        }
    }

    /// `step` and `node` key the dropout mask; the same triple always yields the same mask.
    pub fn forward(
        &mut self,
        inputs: &[&Tensor<T>],
        mode: Mode,
        step: u64,
        node: usize,
    ) -> Result<(Tensor<T>, Cache<T>), NnError> {
        let shapes: Vec<&[usize]> = inputs.iter().map(|t| t.shape()).collect();
        let out_shape = self.output_shape(&shapes)?;
        match self {
            Layer::Input(_) => Err(NnError::Graph("input nodes are fed, not evaluated".into())),
            Layer::Conv2d(c) => Ok((c.forward(inputs[0])?, Cache::None)),
            Layer::BatchNorm(b) => batchnorm_forward(b, inputs[0], mode),
            Layer::Dense(d) => Ok((dense_forward(d, inputs[0], out_shape)?, Cache::None)),
            Layer::MaxPool(p) => maxpool_forward(p, inputs[0], out_shape),
            Layer::AvgPool(p) => Ok((avgpool_forward(p, inputs[0], out_shape)?, Cache::None)),
            Layer::GlobalAvgPool => {
                let x = inputs[0];
                let hw = x.dim(2) * x.dim(3);
                let inv = T::of(1.0 / hw as f64);
                let data = x.data().chunks_exact(hw).map(|c| c.iter().copied().sum::<T>() * inv).collect();
                Ok((Tensor::new(out_shape, data)?, Cache::None))
            }
            Layer::Relu => {
                let data = inputs[0].data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
                Ok((Tensor::new(out_shape, data)?, Cache::None))
            }
            Layer::Dropout(d) => {
                if mode == Mode::Eval || d.rate == 0.0 {
                    return Ok((inputs[0].clone(), Cache::None));
                }
                let mask = dropout_mask(d, inputs[0].len(), step, node);
                let data = inputs[0].data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                Ok((Tensor::new(out_shape, data)?, Cache::Dropout { mask }))
            }
            Layer::Softmax => Ok((softmax(inputs[0])?, Cache::None)),
            Layer::Concat => {
                let n = out_shape[0];
                let mut data = Vec::with_capacity(out_shape.iter().product());
                for i in 0..n {
                    for t in inputs {
                        let per = t.sample_len();
                        data.extend_from_slice(&t.data()[i * per..(i + 1) * per]);
                    }
                }
                Ok((Tensor::new(out_shape, data)?, Cache::None))
            }
            Layer::ResidualScaleAdd { scale } => {
                let s = T::of(*scale);
                let data = inputs[0].data().iter().zip(inputs[1].data()).map(|(&a, &b)| a + s * b).collect();
                Ok((Tensor::new(out_shape, data)?, Cache::None))
            }
        }
    }

    pub fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        cache: &Cache<T>,
        grad_out: &Tensor<T>,
        need_input: bool,
        need_params: bool,
    ) -> Result<LayerGrads<T>, NnError> {
        if grad_out.shape() != output.shape() {
            return Err(shape_err(format!("gradient {:?} vs output {:?}", grad_out.shape(), output.shape())));
        }
        let single = |dx: Option<Tensor<T>>| LayerGrads { inputs: vec![dx], params: Vec::new() };
        match self {
            Layer::Input(_) => Ok(LayerGrads { inputs: Vec::new(), params: Vec::new() }),
            Layer::Conv2d(c) => {
                let (dx, dw, db) = c.backward(inputs[0], grad_out, need_input, need_params)?;
                Ok(LayerGrads { inputs: vec![dx], params: dw.into_iter().chain(db).collect() })
            }
            Layer::BatchNorm(b) => batchnorm_backward(b, inputs[0], cache, grad_out, need_params),
            Layer::Dense(d) => dense_backward(d, inputs[0], grad_out, need_input, need_params),
            Layer::MaxPool(_) => {
                let Cache::MaxPool { argmax } = cache else {
                    return Err(NnError::Graph("maxpool cache missing".into()));
                };
                let mut dx = vec![T::zero(); inputs[0].len()];
                for (&src, &g) in argmax.iter().zip(grad_out.data()) {
                    dx[src] += g;
                }
                Ok(single(Some(Tensor::new(inputs[0].shape().to_vec(), dx)?)))
            }
            Layer::AvgPool(p) => Ok(single(Some(avgpool_backward(p, inputs[0], grad_out)?))),
            Layer::GlobalAvgPool => {
                let x = inputs[0];
                let hw = x.dim(2) * x.dim(3);
                let inv = T::of(1.0 / hw as f64);
                let mut dx = Vec::with_capacity(x.len());
                for &g in grad_out.data() {
                    dx.extend(std::iter::repeat_n(g * inv, hw));
                }
                Ok(single(Some(Tensor::new(x.shape().to_vec(), dx)?)))
            }
            Layer::Relu => {
                let dx = inputs[0]
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                    .collect();
                Ok(single(Some(Tensor::new(inputs[0].shape().to_vec(), dx)?)))
            }
            Layer::Dropout(_) => match cache {
                Cache::Dropout { mask } => {
                    let dx = grad_out.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                    Ok(single(Some(Tensor::new(output.shape().to_vec(), dx)?)))
                }
                _ => Ok(single(Some(grad_out.clone()))),
            },
            Layer::Softmax => {
                let k = output.dim(1);
                let mut dx = Vec::with_capacity(output.len());
                for (y, g) in output.data().chunks_exact(k).zip(grad_out.data().chunks_exact(k)) {
                    let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                    dx.extend(y.iter().zip(g).map(|(&a, &b)| a * (b - dot)));
                }
                Ok(single(Some(Tensor::new(output.shape().to_vec(), dx)?)))
            }
            Layer::Concat => {
                let n = output.dim(0);
                let mut parts: Vec<Vec<T>> = inputs.iter().map(|t| Vec::with_capacity(t.len())).collect();
                let mut offset = 0;
                for _ in 0..n {
                    for (t, part) in inputs.iter().zip(parts.iter_mut()) {
                        let per = t.sample_len();
                        part.extend_from_slice(&grad_out.data()[offset..offset + per]);
                        offset += per;
                    }
                }
                let grads = inputs
                    .iter()
                    .zip(parts)
                    .map(|(t, p)| Tensor::new(t.shape().to_vec(), p).map(Some))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(LayerGrads { inputs: grads, params: Vec::new() })
            }
            Layer::ResidualScaleAdd { scale } => {
                let s = T::of(*scale);
                let db = grad_out.data().iter().map(|&g| g * s).collect();
                Ok(LayerGrads {
                    inputs: vec![Some(grad_out.clone()), Some(Tensor::new(output.shape().to_vec(), db)?)],
                    params: Vec::new(),
                })
            }
        }
    }
}

fn dropout_mask<T: Scalar>(d: &Dropout, len: usize, step: u64, node: usize) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[d.seed, step, node as u64]));
    let keep = T::of(1.0 / (1.0 - d.rate));
    (0..len).map(|_| if rng.gen::<f64>() < d.rate { T::zero() } else { keep }).collect()
}

/// Row-wise softmax of an `[N, K]` tensor with max subtraction.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if x.shape().len() != 2 {
        return Err(shape_err(format!("softmax expects [N,K], got {:?}", x.shape())));
    }
    let k = x.dim(1);
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
        let sum: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / sum));
    }
    Tensor::new(x.shape().to_vec(), out)
}

fn batchnorm_forward<T: Scalar>(b: &mut BatchNorm<T>, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Cache<T>), NnError> {
    let (n, c) = (x.dim(0), x.dim(1));
    let hw: usize = x.shape()[2..].iter().product();
    let m = n * hw;
    let eps = T::of(b.epsilon);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    let train = mode == Mode::Train;
    if train {
        let inv_m = T::of(1.0 / m as f64);
        for i in 0..n {
            for (ch, mu) in mean.iter_mut().enumerate() {
                let s = (i * c + ch) * hw;
                *mu += x.data()[s..s + hw].iter().copied().sum::<T>();
            }
        }
        mean.iter_mut().for_each(|v| *v *= inv_m);
        for i in 0..n {
            for ch in 0..c {
                let s = (i * c + ch) * hw;
                let mu = mean[ch];
                var[ch] += x.data()[s..s + hw].iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
            }
        }
        var.iter_mut().for_each(|v| *v *= inv_m);
        let keep = T::of(b.momentum);
        let fresh = T::of(1.0 - b.momentum);
        let unbias = if m > 1 { T::of(m as f64 / (m - 1) as f64) } else { T::one() };
        for ch in 0..c {
            let rm = &mut b.running_mean.data_mut()[ch];
            *rm = keep * *rm + fresh * mean[ch];
            let rv = &mut b.running_var.data_mut()[ch];
            *rv = keep * *rv + fresh * var[ch] * unbias;
        }
    } else {
        mean.copy_from_slice(b.running_mean.data());
        var.copy_from_slice(b.running_var.data());
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = Vec::with_capacity(x.len());
    let mut out = Vec::with_capacity(x.len());
    for i in 0..n {
        for ch in 0..c {
            let s = (i * c + ch) * hw;
            let (mu, is, g, be) = (mean[ch], inv_std[ch], b.gamma.data()[ch], b.beta.data()[ch]);
            for &v in &x.data()[s..s + hw] {
                let h = (v - mu) * is;
                xhat.push(h);
                out.push(g * h + be);
            }
        }
    }
    Ok((Tensor::new(x.shape().to_vec(), out)?, Cache::BatchNorm { xhat, inv_std, train }))
}

fn batchnorm_backward<T: Scalar>(
    b: &BatchNorm<T>,
    x: &Tensor<T>,
    cache: &Cache<T>,
    grad_out: &Tensor<T>,
    need_params: bool,
) -> Result<LayerGrads<T>, NnError> {
    let Cache::BatchNorm { xhat, inv_std, train } = cache else {
        return Err(NnError::Graph("batchnorm cache missing".into()));
    };
    let (n, c) = (x.dim(0), x.dim(1));
    let hw: usize = x.shape()[2..].iter().product();
    let m = T::of((n * hw) as f64);
    let g = grad_out.data();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for i in 0..n {
        for ch in 0..c {
            let s = (i * c + ch) * hw;
            for k in s..s + hw {
                dgamma[ch] += g[k] * xhat[k];
                dbeta[ch] += g[k];
            }
        }
    }
    let mut dx = vec![T::zero(); x.len()];
    for i in 0..n {
        for ch in 0..c {
            let s = (i * c + ch) * hw;
            let gm = b.gamma.data()[ch];
            let is = inv_std[ch];
            for k in s..s + hw {
                dx[k] = if *train {
                    gm * is / m * (m * g[k] - dbeta[ch] - xhat[k] * dgamma[ch])
                } else {
                    gm * is * g[k]
                };
            }
        }
    }
    let params = if need_params {
        vec![Tensor::new(vec![c], dgamma)?, Tensor::new(vec![c], dbeta)?]
    } else {
        Vec::new()
    };
    Ok(LayerGrads { inputs: vec![Some(Tensor::new(x.shape().to_vec(), dx)?)], params })
}

fn dense_forward<T: Scalar>(d: &Dense<T>, x: &Tensor<T>, out_shape: Vec<usize>) -> Result<Tensor<T>, NnError> {
    let (n, fin, fout) = (x.dim(0), d.in_features, d.out_features);
    let w = d.weight.data();
    let mut out = Vec::with_capacity(n * fout);
    for row in x.data().chunks_exact(fin) {
        for o in 0..fout {
            let mut acc = T::zero();
            for (&a, &b) in row.iter().zip(&w[o * fin..(o + 1) * fin]) {
                acc += a * b;
            }
            out.push(acc + d.bias.data()[o]);
        }
    }
    debug_assert_eq!(out.len(), n * fout);
    Tensor::new(out_shape, out)
}

fn dense_backward<T: Scalar>(
    d: &Dense<T>,
    x: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
    need_params: bool,
) -> Result<LayerGrads<T>, NnError> {
    let (fin, fout) = (d.in_features, d.out_features);
    let w = d.weight.data();
    let g = grad_out.data();
    let mut params = Vec::new();
    if need_params {
        let mut dw = vec![T::zero(); fout * fin];
        let mut db = vec![T::zero(); fout];
        for (row, grow) in x.data().chunks_exact(fin).zip(g.chunks_exact(fout)) {
            for o in 0..fout {
                let go = grow[o];
                db[o] += go;
                for (acc, &xv) in dw[o * fin..(o + 1) * fin].iter_mut().zip(row) {
                    *acc += go * xv;
                }
            }
        }
        params = vec![Tensor::new(vec![fout, fin], dw)?, Tensor::new(vec![fout], db)?];
    }
    let dx = if need_input {
        let mut dx = vec![T::zero(); x.len()];
        for (drow, grow) in dx.chunks_exact_mut(fin).zip(g.chunks_exact(fout)) {
            for o in 0..fout {
                let go = grow[o];
                for (acc, &wv) in drow.iter_mut().zip(&w[o * fin..(o + 1) * fin]) {
                    *acc += go * wv;
                }
            }
        }
        Some(Tensor::new(x.shape().to_vec(), dx)?)
    } else {
        None
    };
    Ok(LayerGrads { inputs: vec![dx], params })
}

fn maxpool_forward<T: Scalar>(p: &Pool2d, x: &Tensor<T>, out_shape: Vec<usize>) -> Result<(Tensor<T>, Cache<T>), NnError> {
    let (h, w) = (x.dim(2), x.dim(3));
    let (oh, ow) = (out_shape[2], out_shape[3]);
    let planes = x.dim(0) * x.dim(1);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut argmax = Vec::with_capacity(planes * oh * ow);
    for plane in 0..planes {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = T::neg_infinity();
                let mut best_i = base;
                for ky in 0..p.kernel {
                    for kx in 0..p.kernel {
                        let i = base + (oy * p.stride + ky) * w + ox * p.stride + kx;
                        if x.data()[i] > best {
                            best = x.data()[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_i);
            }
        }
    }
    Ok((Tensor::new(out_shape, out)?, Cache::MaxPool { argmax }))
}

fn avgpool_forward<T: Scalar>(p: &Pool2d, x: &Tensor<T>, out_shape: Vec<usize>) -> Result<Tensor<T>, NnError> {
    let (h, w) = (x.dim(2), x.dim(3));
    let (oh, ow) = (out_shape[2], out_shape[3]);
    let inv = T::of(1.0 / (p.kernel * p.kernel) as f64);
    let planes = x.dim(0) * x.dim(1);
    let mut out = Vec::with_capacity(planes * oh * ow);
    for plane in 0..planes {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::zero();
                for ky in 0..p.kernel {
                    for kx in 0..p.kernel {
                        acc += x.data()[base + (oy * p.stride + ky) * w + ox * p.stride + kx];
                    }
                }
                out.push(acc * inv);
            }
        }
    }
    Tensor::new(out_shape, out)
}

fn avgpool_backward<T: Scalar>(p: &Pool2d, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (h, w) = (x.dim(2), x.dim(3));
    let (oh, ow) = (grad_out.dim(2), grad_out.dim(3));
    let inv = T::of(1.0 / (p.kernel * p.kernel) as f64);
    let mut dx = vec![T::zero(); x.len()];
    for plane in 0..x.dim(0) * x.dim(1) {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let g = grad_out.data()[(plane * oh + oy) * ow + ox] * inv;
                for ky in 0..p.kernel {
                    for kx in 0..p.kernel {
                        dx[base + (oy * p.stride + ky) * w + ox * p.stride + kx] += g;
                    }
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), dx)
}
