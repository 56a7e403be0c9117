//! Straightforward reference implementations used to check the optimized code.
#![allow(dead_code)]

/// Pearson correlation of two 0/1 sequences.
pub fn pearson(a: &[bool], b: &[bool]) -> f64 {
    let n = a.len() as f64;
    let x: Vec<f64> = a.iter().map(|&v| f64::from(u8::from(v))).collect();
    let y: Vec<f64> = b.iter().map(|&v| f64::from(u8::from(v))).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(&y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counted one half.
pub fn concordance(labels: &[bool], scores: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

pub fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Mirror without repeating the edge sample: -1 -> 1, n -> n - 2.
pub fn mirror_index(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Median of every full window, found by sorting.
pub fn median_by_sorting(pixels: &[u16], w: usize, h: usize, r: usize, mirror: bool) -> Vec<u16> {
    let r = r as i64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut win = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = if mirror {
                        (mirror_index(x + dx, w), mirror_index(y + dy, h))
                    } else {
                        (clamp_index(x + dx, w), clamp_index(y + dy, h))
                    };
                    win.push(pixels[sy * w + sx]);
                }
            }
            win.sort_unstable();
            out.push(win[win.len() / 2]);
        }
    }
    out
}

/// Global histogram equalization: `round((cdf(v) - cdf_min) / (N - cdf_min) * (L - 1))`,
/// identity when the image has a single level.
pub fn equalize_globally(pixels: &[u16], levels: usize) -> Vec<u16> {
    let mut hist = vec![0u64; levels];
    for &p in pixels {
        hist[p as usize] += 1;
    }
    let mut cdf = vec![0u64; levels];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(&hist) {
        acc += h;
        *c = acc;
    }
    let n = pixels.len() as u64;
    let cdf_min = *cdf.iter().find(|&&c| c > 0).unwrap();
    if n == cdf_min {
        return pixels.to_vec();
    }
    pixels
        .iter()
        .map(|&p| {
            let v = (cdf[p as usize] - cdf_min) as f64 / (n - cdf_min) as f64 * (levels - 1) as f64;
            (v + 0.5).floor() as u16
        })
        .collect()
}

/// Direct nested-loop cross-correlation. `x` is `[n, c, h, w]`, `weight` is `[o, c, k, k]`.
#[allow(clippy::too_many_arguments)]
pub fn conv_loops(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    weight: &[f64],
    bias: Option<&[f64]>,
    o: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for ni in 0..n {
        for oi in 0..o {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut s = 0.0;
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as i64 - pad as i64;
                                let ix = (xo * stride + kx) as i64 - pad as i64;
                                if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                    continue;
                                }
                                s += weight[((oi * c + ci) * k + ky) * k + kx]
                                    * x[((ni * c + ci) * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    if let Some(b) = bias {
                        s += b[oi];
                    }
                    out[((ni * o + oi) * oh + y) * ow + xo] = s;
                }
            }
        }
    }
    (out, oh, ow)
}
