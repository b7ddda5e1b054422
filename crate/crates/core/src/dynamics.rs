//! Pixel dynamics: every foreground pixel is moved along the bilinearly
//! interpolated flow field until it settles, and pixels that settle in the
//! same sink become one instance.
//!
//! Integration is independent per pixel and runs in parallel over 64×64
//! tiles; clustering is a single global pass. Output is bit-identical for any
//! thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{canonicalize_labels, FlowField, LabelMap};

const TILE: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("flow planes disagree with the declared dimensions")]
    DimensionMismatch,
    #[error("invalid dynamics parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsParams {
    /// Pixels moved per Euler step along a unit flow vector.
    pub step_size: f32,
    pub max_steps: u32,
    /// A step shorter than this ends integration of a pixel.
    pub convergence_eps: f32,
    pub fg_threshold: f32,
    pub bin_closing_radius: u32,
    /// Clusters with fewer source pixels are erased to background.
    pub min_instance_area: u32,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            step_size: 1.0,
            max_steps: 250,
            convergence_eps: 0.01,
            fg_threshold: 0.5,
            bin_closing_radius: 1,
            min_instance_area: 15,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.step_size > 0.0) {
            return Err(DynamicsError::InvalidParams("step_size must be positive"));
        }
        if self.max_steps < 1 {
            return Err(DynamicsError::InvalidParams("max_steps must be at least 1"));
        }
        if !(self.fg_threshold > 0.0 && self.fg_threshold < 1.0) {
            return Err(DynamicsError::InvalidParams("fg_threshold must lie in (0, 1)"));
        }
        if self.min_instance_area < 1 {
            return Err(DynamicsError::InvalidParams("min_instance_area must be at least 1"));
        }
        if !(self.convergence_eps >= 0.0) {
            return Err(DynamicsError::InvalidParams("convergence_eps must be non-negative"));
        }
        Ok(())
    }
}

/// Final sub-pixel positions of the integrated foreground pixels.
///
/// `pixels` holds row-major indices in tile order; `positions` and `steps`
/// are parallel to it. Pixels below the foreground threshold are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceMap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u32>,
    /// (y, x), clamped to the raster.
    pub positions: Vec<[f32; 2]>,
    pub steps: Vec<u32>,
}

impl ConvergenceMap {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Pixels that stopped before `max_steps`.
    pub fn converged(&self, max_steps: u32) -> usize {
        self.steps.iter().filter(|&&s| s < max_steps).count()
    }
}

struct Field<'a> {
    w: usize,
    h: usize,
    dy: &'a [f32],
    dx: &'a [f32],
}

impl Field<'_> {
    #[inline]
    fn sample(&self, y: f32, x: f32) -> (f32, f32) {
        let y0 = (y as usize).min(self.h - 1);
        let x0 = (x as usize).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let x1 = (x0 + 1).min(self.w - 1);
        let fy = y - y0 as f32;
        let fx = x - x0 as f32;
        let (i00, i01, i10, i11) = (y0 * self.w + x0, y0 * self.w + x1, y1 * self.w + x0, y1 * self.w + x1);
        let w00 = (1.0 - fy) * (1.0 - fx);
        let w01 = (1.0 - fy) * fx;
        let w10 = fy * (1.0 - fx);
        let w11 = fy * fx;
        let vy = w00 * self.dy[i00] + w01 * self.dy[i01] + w10 * self.dy[i10] + w11 * self.dy[i11];
        let vx = w00 * self.dx[i00] + w01 * self.dx[i01] + w10 * self.dx[i10] + w11 * self.dx[i11];
        (vy, vx)
    }
}

#[inline]
fn integrate(field: &Field, start: u32, p: &DynamicsParams) -> ([f32; 2], u32) {
    let (ymax, xmax) = ((field.h - 1) as f32, (field.w - 1) as f32);
    let mut y = (start as usize / field.w) as f32;
    let mut x = (start as usize % field.w) as f32;
    let eps2 = p.convergence_eps * p.convergence_eps;
    let mut steps = 0;
    while steps < p.max_steps {
        let (vy, vx) = field.sample(y, x);
        let ny = (y + p.step_size * vy).clamp(0.0, ymax);
        let nx = (x + p.step_size * vx).clamp(0.0, xmax);
        let (my, mx) = (ny - y, nx - x);
        y = ny;
        x = nx;
        steps += 1;
        if my * my + mx * mx < eps2 {
            break;
        }
    }
    ([y, x], steps)
}

/// Foreground pixel indices grouped by tile, row-major within each tile.
fn foreground_in_tile_order(f: &FlowField, threshold: f32) -> Vec<Vec<u32>> {
    let (w, h) = (f.width, f.height);
    let (tx, ty) = (w.div_ceil(TILE), h.div_ceil(TILE));
    (0..tx * ty)
        .into_par_iter()
        .map(|t| {
            let (x0, y0) = ((t % tx) * TILE, (t / tx) * TILE);
            let mut out = Vec::new();
            for y in y0..(y0 + TILE).min(h) {
                for x in x0..(x0 + TILE).min(w) {
                    let i = y * w + x;
                    if f.fg[i] >= threshold {
                        out.push(i as u32);
                    }
                }
            }
            out
        })
        .collect()
}

/// Euler-integrates every pixel with `fg >= fg_threshold` along the flow.
pub fn follow_flows(f: &FlowField, p: &DynamicsParams) -> Result<ConvergenceMap, DynamicsError> {
    f.validate().map_err(|_| DynamicsError::DimensionMismatch)?;
    p.validate()?;
    let tiles = foreground_in_tile_order(f, p.fg_threshold);
    let field = Field { w: f.width, h: f.height, dy: &f.dy, dx: &f.dx };
    let results: Vec<(Vec<[f32; 2]>, Vec<u32>)> = tiles
        .par_iter()
        .map(|tile| tile.iter().map(|&i| integrate(&field, i, p)).unzip())
        .collect();
    let total: usize = tiles.iter().map(Vec::len).sum();
    let mut map = ConvergenceMap {
        width: f.width,
        height: f.height,
        pixels: Vec::with_capacity(total),
        positions: Vec::with_capacity(total),
        steps: Vec::with_capacity(total),
    };
    for (tile, (pos, steps)) in tiles.into_iter().zip(results) {
        map.pixels.extend(tile);
        map.positions.extend(pos);
        map.steps.extend(steps);
    }
    Ok(map)
}

fn disk_offsets(radius: u32) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut v = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dy * dy + dx * dx <= r * r {
                v.push((dy, dx));
            }
        }
    }
    v
}

/// Morphological closing of a sparse set of occupied cells with a disk of
/// `radius`. Erosion treats everything outside the raster as set, so the
/// result always contains the input.
fn close_bins(occupied: &[u32], w: usize, h: usize, radius: u32) -> Vec<bool> {
    let mut closed = vec![false; w * h];
    for &b in occupied {
        closed[b as usize] = true;
    }
    if radius == 0 {
        return closed;
    }
    let offsets = disk_offsets(radius);
    let mut dilated = closed.clone();
    let mut added: Vec<u32> = Vec::new();
    for &b in occupied {
        let (x, y) = ((b as usize % w) as isize, (b as usize / w) as isize);
        for &(dy, dx) in &offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                let j = ny as usize * w + nx as usize;
                if !dilated[j] {
                    dilated[j] = true;
                    added.push(j as u32);
                }
            }
        }
    }
    // only pixels gained by dilation can be lost again by erosion
    for &j in &added {
        let (x, y) = ((j as usize % w) as isize, (j as usize / w) as isize);
        let keep = offsets.iter().all(|&(dy, dx)| {
            let (nx, ny) = (x + dx, y + dy);
            nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h || dilated[ny as usize * w + nx as usize]
        });
        if keep {
            closed[j as usize] = true;
        }
    }
    closed
}

/// Groups converged pixels by the 4-connected components of their closed
/// sink bins and returns a canonical label map.
pub fn cluster_sinks(c: &ConvergenceMap, p: &DynamicsParams) -> LabelMap {
    let (w, h) = (c.width, c.height);
    if c.is_empty() {
        return LabelMap::new(w, h);
    }
    let bins: Vec<u32> = c
        .positions
        .iter()
        .map(|&[y, x]| {
            let by = (y.round() as usize).min(h - 1);
            let bx = (x.round() as usize).min(w - 1);
            (by * w + bx) as u32
        })
        .collect();
    let mut occupied = bins.clone();
    occupied.sort_unstable();
    occupied.dedup();
    let closed = close_bins(&occupied, w, h, p.bin_closing_radius);

    // components in raster order of their first cell
    let mut comp = vec![0u32; w * h];
    let mut n_comp = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !closed[start] || comp[start] != 0 {
            continue;
        }
        n_comp += 1;
        comp[start] = n_comp;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            for (ok, j) in [(y > 0, i.wrapping_sub(w)), (x > 0, i.wrapping_sub(1)), (x + 1 < w, i + 1), (y + 1 < h, i + w)] {
                if ok && closed[j] && comp[j] == 0 {
                    comp[j] = n_comp;
                    stack.push(j);
                }
            }
        }
    }
    drop(closed);

    let mut counts = vec![0u32; n_comp as usize + 1];
    for &b in &bins {
        counts[comp[b as usize] as usize] += 1;
    }
    let mut labels = vec![0u32; w * h];
    for (&px, &b) in c.pixels.iter().zip(&bins) {
        let k = comp[b as usize];
        if counts[k as usize] >= p.min_instance_area {
            labels[px as usize] = k;
        }
    }
    drop(comp);
    canonicalize_labels(&LabelMap::from_vec(w, h, labels).expect("dims"))
}

/// Flow field to instance labels: [`follow_flows`] then [`cluster_sinks`].
pub fn segment(f: &FlowField, p: &DynamicsParams) -> Result<LabelMap, DynamicsError> {
    let c = follow_flows(f, p)?;
    Ok(cluster_sinks(&c, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowgen::{instance_center, labels_to_flows, FlowGenParams};
    use crate::imagecore::Mask;

    fn disk_labels(w: usize, h: usize, disks: &[(f64, f64, f64)]) -> LabelMap {
        let mut lm = LabelMap::new(w, h);
        for (k, &(cy, cx, r)) in disks.iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    if (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r {
                        lm.set(x, y, k as u32 + 1);
                    }
                }
            }
        }
        lm
    }

    #[test]
    fn zero_flow_is_a_fixed_point() {
        let mut f = FlowField::zeros(9, 7);
        f.fg.fill(1.0);
        let c = follow_flows(&f, &DynamicsParams::default()).unwrap();
        assert_eq!(c.len(), 63);
        for (&i, pos) in c.pixels.iter().zip(&c.positions) {
            assert_eq!(*pos, [(i / 9) as f32, (i % 9) as f32]);
        }
        assert!(c.steps.iter().all(|&s| s == 1));
    }

    #[test]
    fn empty_foreground() {
        let f = FlowField::zeros(8, 8);
        let c = follow_flows(&f, &DynamicsParams::default()).unwrap();
        assert!(c.is_empty());
        assert_eq!(segment(&f, &DynamicsParams::default()).unwrap(), LabelMap::new(8, 8));
    }

    #[test]
    fn mismatched_planes() {
        let mut f = FlowField::zeros(4, 4);
        f.dx.pop();
        assert_eq!(follow_flows(&f, &DynamicsParams::default()), Err(DynamicsError::DimensionMismatch));
    }

    #[test]
    fn disk_converges_to_center() {
        let lm = disk_labels(40, 40, &[(19.0, 20.0, 15.0)]);
        let f = labels_to_flows(&lm, &FlowGenParams::default()).unwrap();
        let mask = Mask::from_vec(40, 40, lm.mask_of(1)).unwrap();
        let (cy, cx) = instance_center(&mask).unwrap();
        let c = follow_flows(&f, &DynamicsParams::default()).unwrap();
        assert_eq!(c.len(), lm.foreground_count());
        for &[y, x] in &c.positions {
            assert!((y - cy as f32).hypot(x - cx as f32) <= 2.0);
        }
    }

    #[test]
    fn single_sink_is_one_instance() {
        let c = ConvergenceMap {
            width: 10,
            height: 10,
            pixels: (0..30).collect(),
            positions: vec![[5.2, 5.4]; 30],
            steps: vec![3; 30],
        };
        let lm = cluster_sinks(&c, &DynamicsParams::default());
        assert_eq!(lm.instance_count(), 1);
        assert_eq!(lm.foreground_count(), 30);
    }

    #[test]
    fn two_disks_give_two_instances() {
        let lm = disk_labels(60, 40, &[(20.0, 14.0, 9.0), (20.0, 34.0, 9.0)]);
        let f = labels_to_flows(&lm, &FlowGenParams::default()).unwrap();
        let out = segment(&f, &DynamicsParams::default()).unwrap();
        assert_eq!(out.instance_count(), 2);
        assert_eq!(out, canonicalize_labels(&lm));
    }

    #[test]
    fn speck_is_erased() {
        let mut lm = disk_labels(30, 30, &[(12.0, 12.0, 6.0)]);
        // 5-pixel plus-shaped speck
        for (x, y) in [(25, 25), (24, 25), (26, 25), (25, 24), (25, 26)] {
            lm.set(x, y, 2);
        }
        let f = labels_to_flows(&lm, &FlowGenParams::default()).unwrap();
        let out = segment(&f, &DynamicsParams::default()).unwrap();
        assert_eq!(out.instance_count(), 1);
        assert_eq!(out.get(25, 25), 0);
    }

    #[test]
    fn uniform_zero_flow_merges_into_one() {
        let mut f = FlowField::zeros(16, 16);
        f.fg.fill(1.0);
        let out = segment(&f, &DynamicsParams::default()).unwrap();
        assert_eq!(out.instance_count(), 1);
        assert_eq!(out.foreground_count(), 256);
    }

    #[test]
    fn closing_bridges_one_pixel_gaps_only() {
        let closed = close_bins(&[0, 2, 7], 8, 1, 1);
        assert_eq!(closed, vec![true, true, true, false, false, false, false, true]);
        // closing never loses occupied cells at the border
        let c = close_bins(&[0], 3, 3, 1);
        assert!(c[0]);
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let lm = disk_labels(96, 80, &[(20.0, 20.0, 12.0), (50.0, 60.0, 18.0), (70.0, 20.0, 8.0)]);
        let f = labels_to_flows(&lm, &FlowGenParams::default()).unwrap();
        let run = |n| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            pool.install(|| (follow_flows(&f, &DynamicsParams::default()).unwrap(), segment(&f, &DynamicsParams::default()).unwrap()))
        };
        let (c1, l1) = run(1);
        let (c3, l3) = run(3);
        assert_eq!(c1, c3);
        assert_eq!(l1, l3);
    }

    #[test]
    fn labels_subset_of_foreground() {
        let lm = disk_labels(50, 50, &[(25.0, 25.0, 14.0)]);
        let mut f = labels_to_flows(&lm, &FlowGenParams::default()).unwrap();
        for v in f.fg.iter_mut().step_by(3) {
            *v *= 0.4;
        }
        let out = segment(&f, &DynamicsParams::default()).unwrap();
        for i in 0..2500 {
            if out.labels()[i] != 0 {
                assert!(f.fg[i] >= 0.5);
            }
        }
    }
}
