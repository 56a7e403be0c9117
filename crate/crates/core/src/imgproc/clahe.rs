use super::{GrayImage, ImgError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    tiles_x: usize,
    tiles_y: usize,
    clip_limit: f64,
    bins: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self { tiles_x: 8, tiles_y: 8, clip_limit: 2.0, bins: 256 }
    }
}

impl ClaheParams {
    pub fn new(tiles_x: usize, tiles_y: usize, clip_limit: f64, bins: usize) -> Result<Self, ImgError> {
        if tiles_x == 0 || tiles_y == 0 {
            return Err(ImgError::InvalidParams("tile grid must be at least 1x1".into()));
        }
        if !(clip_limit > 0.0 && clip_limit.is_finite()) {
            return Err(ImgError::InvalidParams(format!("clip limit must be positive, got {clip_limit}")));
        }
        if bins < 2 {
            return Err(ImgError::InvalidParams(format!("need at least 2 histogram bins, got {bins}")));
        }
        Ok(Self { tiles_x, tiles_y, clip_limit, bins })
    }

    pub fn tiles_x(&self) -> usize {
        self.tiles_x
    }

    pub fn tiles_y(&self) -> usize {
        self.tiles_y
    }

    pub fn clip_limit(&self) -> f64 {
        self.clip_limit
    }

    pub fn bins(&self) -> usize {
        self.bins
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u64>,
}

impl Histogram {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }
}

/// Per-tile transfer function: input level to output level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileMapping {
    lut: Vec<u16>,
}

impl TileMapping {
    pub fn identity(levels: u32) -> Self {
        Self { lut: (0..levels).map(|v| v as u16).collect() }
    }

    pub fn lut(&self) -> &[u16] {
        &self.lut
    }

    pub fn is_monotone(&self) -> bool {
        self.lut.windows(2).all(|w| w[0] <= w[1])
    }

    /// Histogram-equalization mapping `round((cdf(v) - cdf_min) / (n - cdf_min) * (L-1))`,
    /// evaluated in exact integer arithmetic with ties rounded up. A histogram holding a single
    /// occupied bin maps every level to itself.
    pub fn equalize(hist: &Histogram, levels: u32) -> Self {
        let bins = hist.bins() as u64;
        let mut cdf = Vec::with_capacity(hist.bins());
        let mut acc = 0u64;
        for &c in hist.counts() {
            acc += c;
            cdf.push(acc);
        }
        let n = acc;
        let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
        let den = n - cdf_min;
        if den == 0 {
            return Self::identity(levels);
        }
        let top = u64::from(levels - 1);
        let lut = (0..u64::from(levels))
            .map(|v| {
                let b = (v * bins / u64::from(levels)) as usize;
                let num = cdf[b].saturating_sub(cdf_min);
                ((2 * num * top + den) / (2 * den)).min(top) as u16
            })
            .collect();
        Self { lut }
    }
}

/// Clips every bin at `max(1, floor(c * mean))` and spreads the clipped mass uniformly.
///
/// Each pass clips, adds `excess / bins` to every bin and hands the remainder out one unit per
/// bin, in index order, to bins still below the limit. Passes repeat until nothing is clipped.
/// If no bin has room left the remaining excess is spread over all bins and the procedure stops,
/// so with `c >= 1` no bin ends more than one above the limit. Total mass is preserved exactly.
pub fn clip_redistribute(hist: &Histogram, clip_limit: f64) -> Histogram {
    let bins = hist.bins();
    if bins == 0 {
        return hist.clone();
    }
    let total = hist.total();
    let mean = total as f64 / bins as f64;
    let limit = ((clip_limit * mean).floor() as u64).max(1);
    let mut h = hist.counts.clone();
    loop {
        let mut excess = 0u64;
        for c in h.iter_mut() {
            if *c > limit {
                excess += *c - limit;
                *c = limit;
            }
        }
        if excess == 0 {
            break;
        }
        if h.iter().all(|&c| c >= limit) {
            spread(&mut h, excess);
            break;
        }
        let per = excess / bins as u64;
        for c in h.iter_mut() {
            *c += per;
        }
        let mut residue = excess - per * bins as u64;
        for c in h.iter_mut() {
            if residue == 0 {
                break;
            }
            if *c < limit {
                *c += 1;
                residue -= 1;
            }
        }
        // residue that found no room is clipped back into the next pass
        if residue > 0 {
            h[0] += residue;
        }
    }
    debug_assert_eq!(h.iter().sum::<u64>(), total);
    Histogram { counts: h }
}

fn spread(h: &mut [u64], amount: u64) {
    let n = h.len() as u64;
    let per = amount / n;
    let mut residue = amount - per * n;
    for c in h.iter_mut() {
        *c += per;
        if residue > 0 {
            *c += 1;
            residue -= 1;
        }
    }
}

/// Half-open pixel ranges of each tile along one axis; the last tile absorbs the remainder.
fn tile_bounds(len: usize, tiles: usize) -> Vec<(usize, usize)> {
    let base = len / tiles;
    (0..tiles)
        .map(|i| {
            let start = i * base;
            let end = if i + 1 == tiles { len } else { start + base };
            (start, end)
        })
        .collect()
}

/// For coordinate `p`, the pair of neighbouring tile indices and the weight of the second one.
fn interp_weights(p: usize, centres: &[f64]) -> (usize, usize, f64) {
    let pf = p as f64;
    let last = centres.len() - 1;
    if pf <= centres[0] {
        return (0, 0, 0.0);
    }
    if pf >= centres[last] {
        return (last, last, 0.0);
    }
    let i = centres.partition_point(|&c| c <= pf) - 1;
    let f = (pf - centres[i]) / (centres[i + 1] - centres[i]);
    (i, i + 1, f)
}

pub fn tile_histogram(img: &GrayImage, xs: (usize, usize), ys: (usize, usize), bins: usize) -> Histogram {
    let levels = u64::from(img.levels());
    let mut counts = vec![0u64; bins];
    for y in ys.0..ys.1 {
        for x in xs.0..xs.1 {
            let b = (u64::from(img.get(x, y)) * bins as u64 / levels) as usize;
            counts[b] += 1;
        }
    }
    Histogram { counts }
}

/// Builds the per-tile mappings in row-major tile order.
pub fn tile_mappings(img: &GrayImage, params: &ClaheParams) -> Result<Vec<TileMapping>, ImgError> {
    check_grid(img, params)?;
    let xb = tile_bounds(img.width(), params.tiles_x);
    let yb = tile_bounds(img.height(), params.tiles_y);
    let mut maps = Vec::with_capacity(xb.len() * yb.len());
    for &ys in &yb {
        for &xs in &xb {
            let hist = tile_histogram(img, xs, ys, params.bins);
            // a single-level tile keeps its level; clipping would otherwise smear it
            if hist.counts().iter().filter(|&&c| c > 0).count() <= 1 {
                maps.push(TileMapping::identity(img.levels()));
                continue;
            }
            let clipped = clip_redistribute(&hist, params.clip_limit);
            maps.push(TileMapping::equalize(&clipped, img.levels()));
        }
    }
    Ok(maps)
}

fn check_grid(img: &GrayImage, params: &ClaheParams) -> Result<(), ImgError> {
    if img.width() < params.tiles_x || img.height() < params.tiles_y {
        return Err(ImgError::InvalidParams(format!(
            "{}x{} image is smaller than the {}x{} tile grid",
            img.width(),
            img.height(),
            params.tiles_x,
            params.tiles_y
        )));
    }
    Ok(())
}

/// Contrast-limited adaptive histogram equalization with bilinear blending of tile mappings.
pub fn clahe(img: &GrayImage, params: &ClaheParams) -> Result<GrayImage, ImgError> {
    let maps = tile_mappings(img, params)?;
    let centre = |b: &(usize, usize)| (b.0 + b.1 - 1) as f64 / 2.0;
    let cx: Vec<f64> = tile_bounds(img.width(), params.tiles_x).iter().map(centre).collect();
    let cy: Vec<f64> = tile_bounds(img.height(), params.tiles_y).iter().map(centre).collect();
    let xw: Vec<_> = (0..img.width()).map(|x| interp_weights(x, &cx)).collect();
    let top = f64::from(img.levels() - 1);
    let tx = params.tiles_x;

    let mut out = Vec::with_capacity(img.pixels().len());
    for y in 0..img.height() {
        let (j0, j1, fy) = interp_weights(y, &cy);
        for (x, &(i0, i1, fx)) in xw.iter().enumerate() {
            let v = img.get(x, y) as usize;
            let m = |j: usize, i: usize| f64::from(maps[j * tx + i].lut[v]);
            let value = (1.0 - fy) * ((1.0 - fx) * m(j0, i0) + fx * m(j0, i1))
                + fy * ((1.0 - fx) * m(j1, i0) + fx * m(j1, i1));
            out.push(value.round().clamp(0.0, top) as u16);
        }
    }
    Ok(img.with_pixels(out))
}
