//! Ground-truth flow fields from labelled masks.
//!
//! Each instance gets a single heat source at an interior centre; heat is
//! relaxed inside the mask and the flow is the normalised gradient of
//! `log(heat)`. Every instance therefore has exactly one sink, which is what
//! the convergence clustering in [`crate::dynamics`] relies on.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{FlowField, LabelMap, Mask, PixelRect};

/// Added to the heat before taking the logarithm.
pub const LOG_EPS: f64 = 1e-20;
/// Gradients below this magnitude produce a zero vector.
pub const MIN_GRADIENT: f64 = 1e-12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowGenError {
    #[error("mask is empty")]
    EmptyMask,
    #[error("centre ({0}, {1}) lies outside the mask")]
    CenterOutsideMask(usize, usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowGenParams {
    /// Multiplies the instance bounding-box diagonal to give the number of
    /// relaxation sweeps.
    pub iterations_factor: f64,
    pub max_iterations: usize,
}

impl Default for FlowGenParams {
    fn default() -> Self {
        Self { iterations_factor: 2.0, max_iterations: 2000 }
    }
}

impl FlowGenParams {
    pub fn validate(&self) -> Result<(), FlowGenError> {
        if !(self.iterations_factor > 0.0) {
            return Err(FlowGenError::InvalidParams("iterations_factor must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(FlowGenError::InvalidParams("max_iterations must be at least 1"));
        }
        Ok(())
    }

    fn iterations_for(&self, bbox: &PixelRect) -> usize {
        let n = (self.iterations_factor * bbox.diagonal()).ceil() as usize;
        n.clamp(1, self.max_iterations)
    }
}

/// Heat values over a mask's raster; zero outside the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

/// City-block distance of every mask pixel to the nearest clear pixel, with
/// everything outside the raster counting as clear. Clear pixels get 0.
pub fn city_block_distance(mask: &Mask) -> Vec<u32> {
    let (w, h) = (mask.width, mask.height);
    let inf = u32::MAX / 2;
    let mut d: Vec<u32> = mask.data.iter().map(|&b| if b { inf } else { 0 }).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if d[i] == 0 {
                continue;
            }
            let up = if y > 0 { d[i - w] } else { 0 };
            let left = if x > 0 { d[i - 1] } else { 0 };
            d[i] = d[i].min(up + 1).min(left + 1);
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            if d[i] == 0 {
                continue;
            }
            let down = if y + 1 < h { d[i + w] } else { 0 };
            let right = if x + 1 < w { d[i + 1] } else { 0 };
            d[i] = d[i].min(down + 1).min(right + 1);
        }
    }
    d
}

/// The mask pixel deepest inside the mask, as (row, col).
///
/// Maximises the 4-connected distance to the background. Ties go to the
/// pixel nearest the mask centroid, then to the smallest row-major index.
pub fn instance_center(mask: &Mask) -> Result<(usize, usize), FlowGenError> {
    let dist = city_block_distance(mask);
    let best = dist.iter().copied().max().unwrap_or(0);
    if best == 0 {
        return Err(FlowGenError::EmptyMask);
    }
    let w = mask.width;
    let (mut n, mut sy, mut sx) = (0i128, 0i128, 0i128);
    for (i, _) in mask.data.iter().enumerate().filter(|(_, &b)| b) {
        n += 1;
        sy += (i / w) as i128;
        sx += (i % w) as i128;
    }
    // squared distance to the centroid, scaled by n² to stay in integers
    let key = |i: usize| {
        let dy = n * (i / w) as i128 - sy;
        let dx = n * (i % w) as i128 - sx;
        dy * dy + dx * dx
    };
    let i = (0..dist.len())
        .filter(|&i| dist[i] == best)
        .min_by_key(|&i| (key(i), i))
        .expect("at least one maximum");
    Ok((i / w, i % w))
}

/// Morphological thinning (Zhang–Suen) iterated to a fixpoint.
pub fn skeletonize(mask: &Mask) -> Mask {
    let mut m = mask.clone();
    let (w, h) = (m.width as isize, m.height as isize);
    // P2..P9 clockwise from north
    const RING: [(isize, isize); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if !m.get(x as usize, y as usize) {
                        continue;
                    }
                    let p: [bool; 8] = RING.map(|(dy, dx)| m.get_signed(x + dx, y + dy));
                    let b = p.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&k| !p[k] && p[(k + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    let (n, e, s, wv) = (p[0], p[2], p[4], p[6]);
                    let ok = if pass == 0 { !(n && e && s) && !(e && s && wv) } else { !(n && e && wv) && !(n && s && wv) };
                    if ok {
                        remove.push((x as usize, y as usize));
                    }
                }
            }
            changed |= !remove.is_empty();
            for (x, y) in remove {
                m.set(x, y, false);
            }
        }
        if !changed {
            return m;
        }
    }
}

/// Relaxes heat inside `mask` from a unit source at `center` (row, col).
///
/// Each sweep adds 1.0 at the centre, then replaces every mask pixel with the
/// mean of itself and its in-mask 4-neighbours.
pub fn diffuse_heat(mask: &Mask, center: (usize, usize), params: &FlowGenParams) -> Result<HeatMap, FlowGenError> {
    params.validate()?;
    let (cy, cx) = center;
    if cy >= mask.height || cx >= mask.width || !mask.get(cx, cy) {
        return Err(FlowGenError::CenterOutsideMask(cy, cx));
    }
    let bbox = mask.bbox().expect("mask contains the centre");
    let iterations = params.iterations_for(&bbox);
    let crop = mask.crop(bbox);
    let local = relax(&crop, (cy - bbox.y0, cx - bbox.x0), iterations);
    let mut values = vec![0f32; mask.width * mask.height];
    for y in 0..crop.height {
        for x in 0..crop.width {
            values[(y + bbox.y0) * mask.width + x + bbox.x0] = local[y * crop.width + x] as f32;
        }
    }
    Ok(HeatMap { width: mask.width, height: mask.height, values })
}

fn relax(mask: &Mask, (cy, cx): (usize, usize), iterations: usize) -> Vec<f64> {
    let (w, h) = (mask.width, mask.height);
    let pixels: Vec<usize> = (0..w * h).filter(|&i| mask.data[i]).collect();
    // neighbour table; usize::MAX marks a missing neighbour
    let nbrs: Vec<[usize; 4]> = pixels
        .iter()
        .map(|&i| {
            let (x, y) = (i % w, i / w);
            let mut n = [usize::MAX; 4];
            let cand = [
                (y > 0).then(|| i - w),
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y + 1 < h).then(|| i + w),
            ];
            for (slot, c) in n.iter_mut().zip(cand) {
                if let Some(j) = c.filter(|&j| mask.data[j]) {
                    *slot = j;
                }
            }
            n
        })
        .collect();
    let src = cy * w + cx;
    let mut cur = vec![0f64; w * h];
    let mut next = vec![0f64; w * h];
    for _ in 0..iterations {
        cur[src] += 1.0;
        for (k, &i) in pixels.iter().enumerate() {
            let mut sum = cur[i];
            let mut count = 1.0;
            for &j in &nbrs[k] {
                if j != usize::MAX {
                    sum += cur[j];
                    count += 1.0;
                }
            }
            next[i] = sum / count;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Unit flow vectors (dy, dx) from the central-difference gradient of
/// `log(heat + LOG_EPS)`. Out-of-mask neighbours take the pixel's own value;
/// the centre and pixels outside the mask get zero.
pub fn flows_from_heat(heat: &HeatMap, mask: &Mask, center: (usize, usize)) -> (Vec<f32>, Vec<f32>) {
    let (w, h) = (mask.width, mask.height);
    let log: Vec<f64> = heat.values.iter().map(|&v| (v as f64 + LOG_EPS).ln()).collect();
    let mut dy = vec![0f32; w * h];
    let mut dx = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask.data[i] || (y, x) == center {
                continue;
            }
            let at = |xx: isize, yy: isize| {
                if mask.get_signed(xx, yy) {
                    log[yy as usize * w + xx as usize]
                } else {
                    log[i]
                }
            };
            let (xs, ys) = (x as isize, y as isize);
            let gy = (at(xs, ys + 1) - at(xs, ys - 1)) / 2.0;
            let gx = (at(xs + 1, ys) - at(xs - 1, ys)) / 2.0;
            let mag = (gy * gy + gx * gx).sqrt();
            if mag >= MIN_GRADIENT {
                dy[i] = (gy / mag) as f32;
                dx[i] = (gx / mag) as f32;
            }
        }
    }
    (dy, dx)
}

struct InstanceFlow {
    rect: PixelRect,
    mask: Mask,
    dy: Vec<f32>,
    dx: Vec<f32>,
}

fn instance_flow(lm: &LabelMap, id: u32, bbox: PixelRect, params: &FlowGenParams) -> InstanceFlow {
    // one pixel of margin keeps the crop's outside equivalent to background
    let rect = bbox.expanded(1, lm.width(), lm.height());
    let mut mask = Mask::new(rect.width(), rect.height());
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            mask.set(x - rect.x0, y - rect.y0, lm.get(x, y) == id);
        }
    }
    let center = instance_center(&mask).expect("instance has pixels");
    let iterations = params.iterations_for(&bbox);
    let heat = relax(&mask, center, iterations);
    let heat = HeatMap { width: mask.width, height: mask.height, values: heat.into_iter().map(|v| v as f32).collect() };
    let (dy, dx) = flows_from_heat(&heat, &mask, center);
    InstanceFlow { rect, mask, dy, dx }
}

/// Flow field for every instance of `lm`; `fg` is 1 on instance pixels.
///
/// Instances are processed independently on their bounding-box crops, so the
/// result does not depend on scheduling.
pub fn labels_to_flows(lm: &LabelMap, params: &FlowGenParams) -> Result<FlowField, FlowGenError> {
    params.validate()?;
    let boxes: Vec<(u32, PixelRect)> = lm.bounding_boxes().into_iter().collect();
    let pieces: Vec<InstanceFlow> = boxes.par_iter().map(|&(id, bbox)| instance_flow(lm, id, bbox, params)).collect();
    let mut field = FlowField::zeros(lm.width(), lm.height());
    for p in pieces {
        let cw = p.rect.width();
        for y in 0..p.rect.height() {
            for x in 0..cw {
                let k = y * cw + x;
                if !p.mask.data[k] {
                    continue;
                }
                let i = (y + p.rect.y0) * lm.width() + x + p.rect.x0;
                field.dy[i] = p.dy[k];
                field.dx[i] = p.dx[k];
                field.fg[i] = 1.0;
            }
        }
    }
    Ok(field)
}
