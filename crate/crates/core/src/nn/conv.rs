//! 2-D cross-correlation (no kernel flip) over NCHW batches via im2col.
//!
//! Samples are processed independently (and in parallel); weight gradients are reduced over
//! the batch in sample order so results do not depend on the thread count.

use rayon::prelude::*;

use super::{NnError, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out, in, k, k]`
    pub weight: Tensor<T>,
    /// `[out]`; omitted when a batchnorm follows.
    pub bias: Option<Tensor<T>>,
}

#[derive(Clone, Copy)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }
    fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel || stride == 0 {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

fn im2col<T: Scalar>(x: &[T], g: Geometry, col: &mut [T]) {
    let l = g.cols();
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * l;
                for oy in 0..g.oh {
                    let iy = (oy * g.s + ky) as isize - g.p as isize;
                    let dst = &mut col[row + oy * g.ow..row + (oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &x[(ci * g.h + iy as usize) * g.w..(ci * g.h + iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.s + kx) as isize - g.p as isize;
                        *d = if ix < 0 || ix >= g.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: Geometry, dx: &mut [T]) {
    let l = g.cols();
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * l;
                for oy in 0..g.oh {
                    let iy = (oy * g.s + ky) as isize - g.p as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = (ci * g.h + iy as usize) * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.s + kx) as isize - g.p as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dx[base + ix as usize] += col[row + oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize, bias: bool) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: bias.then(|| Tensor::zeros(&[out_channels])),
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        if input.len() != 4 || input[1] != self.in_channels {
            return Err(NnError::Shape(format!(
                "conv expects [N,{},H,W], got {input:?}",
                self.in_channels
            )));
        }
        match (
            conv_output_dim(input[2], self.kernel, self.stride, self.padding),
            conv_output_dim(input[3], self.kernel, self.stride, self.padding),
        ) {
            (Some(oh), Some(ow)) => Ok(vec![input[0], self.out_channels, oh, ow]),
            _ => Err(NnError::Shape(format!(
                "conv kernel {} stride {} pad {} does not fit {input:?}",
                self.kernel, self.stride, self.padding
            ))),
        }
    }

    fn geometry(&self, input: &[usize]) -> Result<Geometry, NnError> {
        let out = self.output_shape(input)?;
        Ok(Geometry {
            c: input[1],
            h: input[2],
            w: input[3],
            k: self.kernel,
            s: self.stride,
            p: self.padding,
            oh: out[2],
            ow: out[3],
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let g = self.geometry(x.shape())?;
        let n = x.dim(0);
        let in_len = x.sample_len();
        let (rows, l) = (g.rows(), g.cols());
        let out_len = self.out_channels * l;
        let w = self.weight.data();
        let bias = self.bias.as_ref().map(|b| b.data());

        let per_sample: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut col = vec![T::zero(); rows * l];
                im2col(&x.data()[i * in_len..(i + 1) * in_len], g, &mut col);
                let mut out = vec![T::zero(); out_len];
                for (o, out_row) in out.chunks_exact_mut(l).enumerate() {
                    // accumulate in (channel, ky, kx) order for every output position
                    for (j, col_row) in col.chunks_exact(l).enumerate() {
                        let wv = w[o * rows + j];
                        for (acc, &c) in out_row.iter_mut().zip(col_row) {
                            *acc += wv * c;
                        }
                    }
                    if let Some(b) = bias {
                        for acc in out_row.iter_mut() {
                            *acc += b[o];
                        }
                    }
                }
                out
            })
            .collect();
        Tensor::new(vec![n, self.out_channels, g.oh, g.ow], per_sample.concat())
    }

    /// Returns `(dx, dweight, dbias)`. `dx` is skipped when `need_input` is false.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        need_input: bool,
        need_params: bool,
    ) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>), NnError> {
        let g = self.geometry(x.shape())?;
        let n = x.dim(0);
        let in_len = x.sample_len();
        let (rows, l) = (g.rows(), g.cols());
        let w = self.weight.data();
        let oc = self.out_channels;

        let per_sample: Vec<(Vec<T>, Vec<T>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let dout = &grad_out.data()[i * oc * l..(i + 1) * oc * l];
                let mut dw = Vec::new();
                if need_params {
                    let mut col = vec![T::zero(); rows * l];
                    im2col(&x.data()[i * in_len..(i + 1) * in_len], g, &mut col);
                    dw = vec![T::zero(); oc * rows];
                    for (o, dout_row) in dout.chunks_exact(l).enumerate() {
                        for (j, col_row) in col.chunks_exact(l).enumerate() {
                            let mut acc = T::zero();
                            for (&a, &b) in dout_row.iter().zip(col_row) {
                                acc += a * b;
                            }
                            dw[o * rows + j] = acc;
                        }
                    }
                }
                let mut dx = Vec::new();
                if need_input {
                    let mut dcol = vec![T::zero(); rows * l];
                    for (o, dout_row) in dout.chunks_exact(l).enumerate() {
                        for (j, dcol_row) in dcol.chunks_exact_mut(l).enumerate() {
                            let wv = w[o * rows + j];
                            for (acc, &d) in dcol_row.iter_mut().zip(dout_row) {
                                *acc += wv * d;
                            }
                        }
                    }
                    dx = vec![T::zero(); in_len];
                    col2im(&dcol, g, &mut dx);
                }
                (dx, dw)
            })
            .collect();

        let mut dweight = None;
        let mut dbias = None;
        if need_params {
            let mut acc = vec![T::zero(); oc * rows];
            for (_, dw) in &per_sample {
                for (a, &b) in acc.iter_mut().zip(dw) {
                    *a += b;
                }
            }
            dweight = Some(Tensor::new(self.weight.shape().to_vec(), acc)?);
            if self.bias.is_some() {
                let mut db = vec![T::zero(); oc];
                for i in 0..n {
                    for (o, d) in db.iter_mut().enumerate() {
                        let start = (i * oc + o) * l;
                        for &v in &grad_out.data()[start..start + l] {
                            *d += v;
                        }
                    }
                }
                dbias = Some(Tensor::new(vec![oc], db)?);
            }
        }
        let dx = if need_input {
            let data: Vec<T> = per_sample.into_iter().flat_map(|(dx, _)| dx).collect();
            Some(Tensor::new(x.shape().to_vec(), data)?)
        } else {
            None
        };
        Ok((dx, dweight, dbias))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel() {
        let mut conv = Conv2d::<f64>::new(1, 1, 1, 1, 0, true);
        conv.weight.data_mut()[0] = 1.0;
        let x = Tensor::from_f64(vec![1, 1, 2, 3], &[1.0, -2.0, 3.0, 4.0, 5.0, -6.0]).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn all_ones_kernel_sums_window() {
        let mut conv = Conv2d::<f64>::new(1, 1, 3, 1, 0, false);
        conv.weight.data_mut().fill(1.0);
        let x = Tensor::from_f64(vec![1, 1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]).unwrap();
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[45.0]);
    }

    #[test]
    fn zero_input_zero_output() {
        let mut conv = Conv2d::<f64>::new(2, 3, 3, 2, 1, true);
        conv.weight.data_mut().iter_mut().enumerate().for_each(|(i, w)| *w = i as f64 * 0.1 - 2.0);
        let y = conv.forward(&Tensor::zeros(&[2, 2, 5, 5])).unwrap();
        assert_eq!(y.shape(), &[2, 3, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch() {
        let conv = Conv2d::<f64>::new(2, 1, 3, 1, 0, false);
        assert!(conv.forward(&Tensor::zeros(&[1, 1, 4, 4])).is_err());
        assert!(conv.forward(&Tensor::zeros(&[1, 2, 2, 2])).is_err());
    }
}
