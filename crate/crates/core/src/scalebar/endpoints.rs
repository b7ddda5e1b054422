use serde::{Deserialize, Serialize};

use super::{BBox, ScaleBarError, ScaleBarParams};
use crate::imagecore::Raster8;

const WORK_PAD: usize = 2;

/// Bar ends in image columns; `pixel_length = x_right - x_left + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointResult {
    pub x_left: usize,
    pub x_right: usize,
    pub row: usize,
    pub pixel_length: usize,
}

/// Horizontal Sobel response with replicated borders.
#[inline]
fn sobel_x(p: &[u8], w: usize, h: usize, x: usize, y: usize) -> i32 {
    let xl = x.saturating_sub(1);
    let xr = (x + 1).min(w - 1);
    let yu = y.saturating_sub(1);
    let yd = (y + 1).min(h - 1);
    let at = |xx: usize, yy: usize| p[yy * w + xx] as i32;
    (at(xr, yu) + 2 * at(xr, y) + at(xr, yd)) - (at(xl, yu) + 2 * at(xl, y) + at(xl, yd))
}

fn check_bbox(img: &Raster8, b: &BBox) -> Result<(), ScaleBarError> {
    if !b.fits(img.width(), img.height()) {
        return Err(ScaleBarError::BBoxOutOfImage(*b));
    }
    if b.w < 3 || b.h < 3 {
        return Err(ScaleBarError::DegenerateBBox);
    }
    Ok(())
}

/// Channel with the largest summed |horizontal Sobel| inside `bbox`; ties
/// go to the lowest index.
pub fn select_edge_channel(img: &Raster8, bbox: &BBox) -> Result<usize, ScaleBarError> {
    check_bbox(img, bbox)?;
    if img.channels() == 1 {
        return Ok(0);
    }
    let (w, h) = (img.width(), img.height());
    let mut best = (0usize, -1i64);
    for c in 0..img.channels() {
        let plane = img.channel(c);
        let mut s = 0i64;
        for y in bbox.y..bbox.y1() {
            for x in bbox.x..bbox.x1() {
                s += sobel_x(&plane, w, h, x, y).abs() as i64;
            }
        }
        if s > best.1 {
            best = (c, s);
        }
    }
    Ok(best.0)
}

/// Summed-area table over a sub-rectangle of a plane.
struct Integral {
    x0: usize,
    y0: usize,
    w: usize,
    sums: Vec<u64>,
}

impl Integral {
    fn new(p: &[u8], stride: usize, r: &BBox) -> Self {
        let w = r.w + 1;
        let mut sums = vec![0u64; w * (r.h + 1)];
        for y in 0..r.h {
            let mut row = 0u64;
            for x in 0..r.w {
                row += p[(r.y + y) * stride + r.x + x] as u64;
                sums[(y + 1) * w + x + 1] = sums[y * w + x + 1] + row;
            }
        }
        Self { x0: r.x, y0: r.y, w, sums }
    }

    /// Sum over the half-open image rectangle, which must lie in the table.
    fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
        let (a, b) = (x0 - self.x0, x1 - self.x0);
        let (c, d) = (y0 - self.y0, y1 - self.y0);
        self.sums[d * self.w + b] + self.sums[c * self.w + a] - self.sums[c * self.w + b] - self.sums[d * self.w + a]
    }
}

/// Locates the bar ends inside `bbox`.
///
/// The edge-richest channel is binarized with a local mean-C threshold
/// (inverted for light bars so the bar is always foreground), gated to
/// pixels nearer the bar level than their local mean so background
/// texture cannot join the bar. For every edge position between columns e
/// and e+1, foreground/background transitions across the bbox rows are
/// summed weighted by the Sobel magnitude on both sides, then smoothed with
/// a 3-tap mean. Peaks must reach half the maximum and exceed the mean of
/// their ±5 neighbourhood by the sharpness factor. The outermost pair is
/// refined to its strongest unsmoothed edge and yields the ends.
pub fn localize_endpoints(img: &Raster8, bbox: &BBox, params: &ScaleBarParams) -> Result<EndpointResult, ScaleBarError> {
    let (w, h) = (img.width(), img.height());
    if !bbox.fits(w, h) {
        return Err(ScaleBarError::BBoxOutOfImage(*bbox));
    }
    // a tight box is widened so thin bars keep Sobel support and both ends
    // see background
    let c = select_edge_channel(img, &bbox.expanded(WORK_PAD, w, h))?;
    let plane = img.channel(c);
    let (light, bar_level) = levels(&plane, w, h, bbox);
    let half = params.threshold_window / 2;

    // columns whose binarization the profile reads
    let cx0 = bbox.x.saturating_sub(WORK_PAD + 1);
    let cx1 = (bbox.x1() + WORK_PAD).min(w - 1) + 1;
    let region = BBox::new(cx0, bbox.y, cx1 - cx0, bbox.h).expanded(half, w, h);
    let table = Integral::new(&plane, w, &region);
    let cmp_c = params.threshold_c as i64;
    let fg_at = |x: usize, y: usize| -> bool {
        let (x0, x1) = (x.saturating_sub(half), (x + half + 1).min(w));
        let (y0, y1) = (y.saturating_sub(half), (y + half + 1).min(h));
        let n = ((x1 - x0) * (y1 - y0)) as i64;
        let s = table.sum(x0, y0, x1, y1) as i64;
        let p = plane[y * w + x] as i64;
        let v = p * n;
        if light {
            v > s + cmp_c * n && 2 * v > bar_level * n + s
        } else {
            v < s - cmp_c * n && 2 * v < bar_level * n + s
        }
    };

    let cols = cx1 - cx0;
    let mut fg = vec![false; cols * bbox.h];
    let mut grad = vec![0i64; cols * bbox.h];
    for (r, y) in (bbox.y..bbox.y1()).enumerate() {
        for (k, x) in (cx0..cx1).enumerate() {
            fg[r * cols + k] = fg_at(x, y);
            grad[r * cols + k] = sobel_x(&plane, w, h, x, y).abs() as i64;
        }
    }

    // edge e sits between columns cx0 + e and cx0 + e + 1
    let n_edges = cols - 1;
    let mut raw = vec![0i64; n_edges];
    for r in 0..bbox.h {
        for e in 0..n_edges {
            let (a, b) = (r * cols + e, r * cols + e + 1);
            if fg[a] != fg[b] {
                raw[e] += grad[a] + grad[b];
            }
        }
    }
    // 3-tap sums; the division by 3 is deferred to the diagnostics
    let smooth: Vec<i64> = (0..n_edges)
        .map(|e| raw[e] + if e > 0 { raw[e - 1] } else { 0 } + if e + 1 < n_edges { raw[e + 1] } else { 0 })
        .collect();
    let failed = || ScaleBarError::LocalizationFailed { profile: smooth.iter().map(|&v| v as f64 / 3.0).collect() };

    let Some((l, r)) = outer_peaks(&smooth, params) else {
        return Err(failed());
    };
    // the raw edge may sit one step outside a smoothed plateau
    let span = |(a, b): (usize, usize)| a.saturating_sub(1)..=(b + 1).min(n_edges - 1);
    let mut left_edge = *span(l).start();
    for e in span(l) {
        if raw[e] > raw[left_edge] {
            left_edge = e;
        }
    }
    let mut right_edge = *span(r).end();
    for e in span(r).rev() {
        if raw[e] > raw[right_edge] {
            right_edge = e;
        }
    }
    let x_left = (cx0 + left_edge + 1).clamp(bbox.x, bbox.x1() - 1);
    let x_right = (cx0 + right_edge).clamp(bbox.x, bbox.x1() - 1);
    if x_left >= x_right {
        return Err(failed());
    }

    let mut row = bbox.y;
    let mut best = 0usize;
    for r in 0..bbox.h {
        let count = (bbox.x..bbox.x1()).filter(|&x| fg[r * cols + x - cx0]).count();
        if count > best {
            best = count;
            row = bbox.y + r;
        }
    }
    Ok(EndpointResult { x_left, x_right, row, pixel_length: x_right - x_left + 1 })
}

/// Bar polarity from the box versus its 3 px surround, and the bar level
/// (90th or 10th percentile inside the box).
fn levels(p: &[u8], w: usize, h: usize, b: &BBox) -> (bool, i64) {
    let ring = b.expanded(3, w, h);
    let mut inside = Vec::with_capacity(b.area());
    let (mut rs, mut rn) = (0i64, 0i64);
    for y in ring.y..ring.y1() {
        for x in ring.x..ring.x1() {
            let v = p[y * w + x];
            if x >= b.x && x < b.x1() && y >= b.y && y < b.y1() {
                inside.push(v);
            } else {
                rs += v as i64;
                rn += 1;
            }
        }
    }
    inside.sort_unstable();
    let n = inside.len() as i64;
    let is: i64 = inside.iter().map(|&v| v as i64).sum();
    if rn == 0 {
        return (true, inside[(inside.len() - 1) * 9 / 10] as i64);
    }
    // compare means without division
    let light = is * rn >= rs * n;
    let k = if light { (inside.len() - 1) * 9 / 10 } else { (inside.len() - 1) / 10 };
    (light, inside[k] as i64)
}

/// Sharp plateaus `(first, last)` of a positive profile, ascending.
fn sharp_plateaus(s: &[i64], params: &ScaleBarParams) -> Vec<(usize, usize)> {
    let radius = params.sharpness_radius;
    let mut out = Vec::new();
    let mut a = 0;
    while a < s.len() {
        let mut b = a;
        while b + 1 < s.len() && s[b + 1] == s[a] {
            b += 1;
        }
        let v = s[a];
        let rises = a == 0 || s[a - 1] < v;
        let falls = b + 1 == s.len() || s[b + 1] < v;
        if v > 0 && rises && falls {
            let lo = a.saturating_sub(radius);
            let hi = (b + radius).min(s.len() - 1);
            let (mut sum, mut n) = (0i64, 0i64);
            for (i, &x) in s.iter().enumerate().take(hi + 1).skip(lo) {
                if i < a || i > b {
                    sum += x;
                    n += 1;
                }
            }
            if n == 0 || v as f64 * n as f64 >= params.peak_sharpness * sum as f64 {
                out.push((a, b));
            }
        }
        a = b + 1;
    }
    out
}

/// Outermost qualifying plateau in each half of the profile. The amplitude
/// test is relative to the maximum of the same half, so a bar whose ends
/// sit on backgrounds of different contrast keeps both ends.
fn outer_peaks(s: &[i64], params: &ScaleBarParams) -> Option<((usize, usize), (usize, usize))> {
    let n = s.len();
    if n < 2 {
        return None;
    }
    let in_left = |e: usize| 2 * e < n;
    let in_right = |e: usize| 2 * e + 2 > n;
    let max_left = (0..n).filter(|&e| in_left(e)).map(|e| s[e]).max().unwrap_or(0);
    let max_right = (0..n).filter(|&e| in_right(e)).map(|e| s[e]).max().unwrap_or(0);
    let peaks = sharp_plateaus(s, params);
    let strong = |v: i64, max: i64| v as f64 >= params.peak_amplitude * max as f64;
    let left = peaks.iter().find(|&&(a, _)| in_left(a) && strong(s[a], max_left))?;
    let right = peaks.iter().rev().find(|&&(a, b)| in_right(b) && strong(s[a], max_right))?;
    (left.0 < right.0).then_some((*left, *right))
}
