use super::{GrayImage, ImgError};

/// How window samples outside the image are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BorderPolicy {
    /// Clamp to the nearest edge pixel.
    Replicate,
    /// Mirror about the edge pixel without repeating it (`dcb|abcd|cba`).
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedianMode {
    /// Every pixel becomes its window median.
    Classic,
    /// A pixel is replaced only when it differs from its window median by more than the threshold.
    Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MedianParams {
    radius: usize,
    border: BorderPolicy,
    mode: MedianMode,
    threshold: u32,
}

impl Default for MedianParams {
    fn default() -> Self {
        Self { radius: 1, border: BorderPolicy::Replicate, mode: MedianMode::Decision, threshold: 0 }
    }
}

impl MedianParams {
    pub fn classic(radius: usize, border: BorderPolicy) -> Self {
        Self { radius, border, mode: MedianMode::Classic, threshold: 0 }
    }

    /// Decision-based (switched) filter. `threshold` must be below the image level count,
    /// which is checked when the filter runs.
    pub fn decision(radius: usize, border: BorderPolicy, threshold: u32) -> Self {
        Self { radius, border, mode: MedianMode::Decision, threshold }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn border(&self) -> BorderPolicy {
        self.border
    }

    pub fn mode(&self) -> MedianMode {
        self.mode
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn validate(&self, levels: u32) -> Result<(), ImgError> {
        if self.threshold >= levels {
            return Err(ImgError::InvalidParams(format!(
                "median threshold {} must be below the level count {levels}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Maps a possibly out-of-range coordinate into `0..n`.
#[inline]
pub(crate) fn border_index(i: isize, n: usize, border: BorderPolicy) -> usize {
    let n_i = n as isize;
    if (0..n_i).contains(&i) {
        return i as usize;
    }
    match border {
        BorderPolicy::Replicate => i.clamp(0, n_i - 1) as usize,
        BorderPolicy::Reflect => {
            if n == 1 {
                return 0;
            }
            let period = 2 * (n_i - 1);
            let m = i.rem_euclid(period);
            (if m < n_i { m } else { period - m }) as usize
        }
    }
}

/// Median filter over a `(2r+1)×(2r+1)` window.
pub fn median_filter(img: &GrayImage, params: &MedianParams) -> Result<GrayImage, ImgError> {
    params.validate(img.levels())?;
    let (w, h) = (img.width(), img.height());
    let r = params.radius as isize;
    if r == 0 {
        return Ok(img.clone());
    }
    let side = 2 * params.radius + 1;
    let mid = side * side / 2;

    // column index tables are shared by every row
    let cols: Vec<Vec<usize>> = (0..w as isize)
        .map(|x| (-r..=r).map(|dx| border_index(x + dx, w, params.border)).collect())
        .collect();
    let src = img.pixels();
    let mut out = Vec::with_capacity(w * h);
    let mut window = Vec::with_capacity(side * side);
    for y in 0..h as isize {
        let rows: Vec<usize> = (-r..=r).map(|dy| border_index(y + dy, h, params.border) * w).collect();
        for (x, col) in cols.iter().enumerate() {
            window.clear();
            for &row in &rows {
                window.extend(col.iter().map(|&cx| src[row + cx]));
            }
            let (_, &mut median, _) = window.select_nth_unstable(mid);
            let centre = src[y as usize * w + x];
            let value = match params.mode {
                MedianMode::Classic => median,
                MedianMode::Decision => {
                    if u32::from(centre.abs_diff(median)) > params.threshold {
                        median
                    } else {
                        centre
                    }
                }
            };
            out.push(value);
        }
    }
    Ok(img.with_pixels(out))
}
