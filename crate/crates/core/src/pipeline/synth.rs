//! Procedural shape images for proxy pretraining and sanity tasks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::imgproc::GrayImage;
use crate::nn::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    FilledCircle,
    HollowCircle,
    FilledRect,
    HollowRect,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::FilledCircle, ShapeKind::HollowCircle, ShapeKind::FilledRect, ShapeKind::HollowRect];

    pub fn is_circle(self) -> bool {
        matches!(self, ShapeKind::FilledCircle | ShapeKind::HollowCircle)
    }
}

/// Which labelling a synthetic set uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthTask {
    /// Four classes, one per [`ShapeKind`].
    Shapes,
    /// Class 1 for circles, 0 for rectangles; fill style is random.
    CircleVsRect,
}

impl SynthTask {
    pub fn n_classes(self) -> usize {
        match self {
            SynthTask::Shapes => 4,
            SynthTask::CircleVsRect => 2,
        }
    }
}

/// One `size x size` 8-bit image: dim background, bright shape, uniform noise of half-width `noise`.
pub fn render_shape(kind: ShapeKind, size: usize, noise: f64, rng: &mut ChaCha8Rng) -> GrayImage {
    let s = size as f64;
    let bg = rng.gen_range(0.05..0.3);
    let fg = rng.gen_range(0.6..0.95);
    let cx = rng.gen_range(0.35 * s..0.65 * s);
    let cy = rng.gen_range(0.35 * s..0.65 * s);
    let a = rng.gen_range(0.15 * s..0.3 * s);
    let b = rng.gen_range(0.15 * s..0.3 * s);
    let thick = (s / 12.0).max(1.0);
    let mut pixels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let inside = match kind {
                ShapeKind::FilledCircle => dx.hypot(dy) <= a,
                ShapeKind::HollowCircle => (dx.hypot(dy) - a).abs() <= thick / 2.0,
                ShapeKind::FilledRect => dx.abs() <= a && dy.abs() <= b,
                ShapeKind::HollowRect => {
                    dx.abs() <= a && dy.abs() <= b && !(dx.abs() <= a - thick && dy.abs() <= b - thick)
                }
            };
            let base = if inside { fg } else { bg };
            let v = base + if noise > 0.0 { rng.gen_range(-noise..noise) } else { 0.0 };
            pixels.push((v.clamp(0.0, 1.0) * 255.0).round() as u16);
        }
    }
    GrayImage::new(size, size, 256, pixels).expect("dimensions are positive")
}

/// `n` labelled images; sample `i` depends only on `(seed, i)`. Classes cycle so the set is balanced.
pub fn synth_dataset(task: SynthTask, n: usize, size: usize, noise: f64, seed: u64) -> (Vec<GrayImage>, Vec<usize>) {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, i as u64]));
            let (kind, label) = match task {
                SynthTask::Shapes => (ShapeKind::ALL[i % 4], i % 4),
                SynthTask::CircleVsRect => {
                    let label = i % 2;
                    let filled = rng.gen_bool(0.5);
                    let kind = match (label, filled) {
                        (1, true) => ShapeKind::FilledCircle,
                        (1, false) => ShapeKind::HollowCircle,
                        (_, true) => ShapeKind::FilledRect,
                        (_, false) => ShapeKind::HollowRect,
                    };
                    (kind, label)
                }
            };
            (render_shape(kind, size, noise, &mut rng), label)
        })
        .unzip()
}
