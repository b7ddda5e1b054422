use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imagecore::{LabelMap, PixelRect};
use crate::scalebar::ScaleCalibration;

const MIN_AXIS: f64 = 0.5;

/// Measurements of one instance. Lengths are in pixels except
/// `diameter_phys`, which is in nanometres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub id: u32,
    pub area_px: f64,
    pub perimeter_px: f64,
    pub diameter_px: f64,
    pub sphericity: f64,
    pub aspect_ratio: f64,
    pub smoothness: f64,
    pub centroid_x: f64,
    pub centroid_y: f64,
    pub touches_edge: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter_phys: Option<f64>,
}

impl InstanceMetrics {
    pub fn calibrated(mut self, calib: Option<&ScaleCalibration>) -> Self {
        self.diameter_phys = calib.map(|c| self.diameter_px * c.nm_per_pixel);
        self
    }
}

#[derive(Debug, Clone, Default)]
struct Accum {
    area: u64,
    sx: u64,
    sy: u64,
    sxx: u128,
    syy: u128,
    sxy: u128,
    edge: bool,
    rect: Option<PixelRect>,
}

/// Measures every instance, sorted by id. Calibration only adds
/// `diameter_phys`.
pub fn measure_all(lm: &LabelMap, calib: Option<&ScaleCalibration>) -> Vec<InstanceMetrics> {
    let (w, h) = (lm.width(), lm.height());
    let mut acc = vec![Accum::default(); lm.max_id() as usize + 1];
    for y in 0..h {
        for x in 0..w {
            let id = lm.get(x, y);
            if id == 0 {
                continue;
            }
            let a = &mut acc[id as usize];
            let (ux, uy) = (x as u64, y as u64);
            a.area += 1;
            a.sx += ux;
            a.sy += uy;
            a.sxx += (ux * ux) as u128;
            a.syy += (uy * uy) as u128;
            a.sxy += (ux * uy) as u128;
            a.edge |= x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            match &mut a.rect {
                Some(r) => r.include(x, y),
                None => a.rect = Some(PixelRect::point(x, y)),
            }
        }
    }
    acc.par_iter()
        .enumerate()
        .filter(|(_, a)| a.area > 0)
        .map(|(id, a)| measure_one(lm, id as u32, a).calibrated(calib))
        .collect()
}

fn measure_one(lm: &LabelMap, id: u32, a: &Accum) -> InstanceMetrics {
    let n = a.area as f64;
    let (cx, cy) = (a.sx as f64 / n, a.sy as f64 / n);
    // exact central sums n*S2 - S1*S1, then one division
    let central = |s2: u128, p: u64, q: u64| (a.area as i128 * s2 as i128 - p as i128 * q as i128) as f64 / (n * n);
    // each pixel is a unit square, hence the 1/12
    let vxx = central(a.sxx, a.sx, a.sx) + 1.0 / 12.0;
    let vyy = central(a.syy, a.sy, a.sy) + 1.0 / 12.0;
    let vxy = central(a.sxy, a.sx, a.sy);
    let mid = (vxx + vyy) / 2.0;
    let root = (((vxx - vyy) / 2.0).powi(2) + vxy * vxy).sqrt();
    let major = 4.0 * (mid + root).max(0.0).sqrt();
    let minor = (4.0 * (mid - root).max(0.0).sqrt()).max(MIN_AXIS);

    let contour = trace_outer(lm, id, a.rect.expect("nonempty instance"));
    let perimeter = path_length(&contour);
    let (sphericity, smoothness) = if perimeter > 0.0 {
        let hull = hull_perimeter(&contour);
        ((4.0 * std::f64::consts::PI * n / (perimeter * perimeter)).min(1.0), (hull / perimeter).min(1.0))
    } else {
        (1.0, 1.0)
    };
    InstanceMetrics {
        id,
        area_px: n,
        perimeter_px: perimeter,
        diameter_px: 2.0 * (n / std::f64::consts::PI).sqrt(),
        sphericity,
        aspect_ratio: (major / minor).max(1.0),
        smoothness,
        centroid_x: cx,
        centroid_y: cy,
        touches_edge: a.edge,
        diameter_phys: None,
    }
}

// clockwise with y pointing down
const DIRS: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Closed outer contour of instance `id` by radial sweep, as the sequence
/// of visited pixels with the start repeated at the end. A single pixel
/// yields just itself.
pub(crate) fn trace_outer(lm: &LabelMap, id: u32, r: PixelRect) -> Vec<(i64, i64)> {
    let (w, h) = (lm.width() as i64, lm.height() as i64);
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && lm.get(x as usize, y as usize) == id;
    let mut start = None;
    'scan: for y in r.y0..r.y1 {
        for x in r.x0..r.x1 {
            if lm.get(x, y) == id {
                start = Some((x as i64, y as i64));
                break 'scan;
            }
        }
    }
    let start = start.expect("instance inside its rectangle");
    let step = |p: (i64, i64), from: usize| -> Option<usize> {
        (0..8).map(|k| (from + k) % 8).find(|&d| inside(p.0 + DIRS[d].0, p.1 + DIRS[d].1))
    };
    // nothing lies above or to the left of the start, so the sweep begins west
    let Some(first) = step(start, 4) else {
        return vec![start];
    };
    let mut out = vec![start];
    let (mut p, mut d) = (start, first);
    loop {
        p = (p.0 + DIRS[d].0, p.1 + DIRS[d].1);
        out.push(p);
        // resume just past the pixel we came from
        let next = step(p, (d + 5) % 8).expect("contour pixel has a neighbour");
        if p == start && next == first {
            break;
        }
        d = next;
    }
    out
}

pub(crate) fn path_length(path: &[(i64, i64)]) -> f64 {
    path.windows(2)
        .map(|s| if s[0].0 != s[1].0 && s[0].1 != s[1].1 { std::f64::consts::SQRT_2 } else { 1.0 })
        .sum()
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Perimeter of the convex hull of `pts` (monotone chain). Collinear input
/// gives twice the segment length.
pub(crate) fn hull_perimeter(pts: &[(i64, i64)]) -> f64 {
    let mut p = pts.to_vec();
    p.sort_unstable();
    p.dedup();
    if p.len() < 2 {
        return 0.0;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(p.len() * 2);
    for pass in 0..2 {
        let floor = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= floor + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull.push(hull[0]);
    hull.windows(2).map(|s| (((s[1].0 - s[0].0).pow(2) + (s[1].1 - s[0].1).pow(2)) as f64).sqrt()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalebar::{calibrate_length, LengthUnit};

    fn paint(w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> LabelMap {
        let mut lm = LabelMap::new(w, h);
        for y in 0..h {
            for x in 0..w {
                if f(x, y) {
                    lm.set(x, y, 1);
                }
            }
        }
        lm
    }

    fn disk(r: f64, cx: f64, cy: f64, w: usize, h: usize) -> LabelMap {
        paint(w, h, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
    }

    /// Perimeter from 4-boundary pixels ordered by angle about the centroid;
    /// valid for star-shaped regions.
    fn angular_perimeter(lm: &LabelMap) -> f64 {
        let (w, h) = (lm.width() as i64, lm.height() as i64);
        let fg = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && lm.get(x as usize, y as usize) != 0;
        let mut pts = Vec::new();
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                if fg(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1.0;
                    if !(fg(x - 1, y) && fg(x + 1, y) && fg(x, y - 1) && fg(x, y + 1)) {
                        pts.push((x, y));
                    }
                }
            }
        }
        let (cx, cy) = (sx / n, sy / n);
        pts.sort_by(|a, b| {
            let ta = (a.1 as f64 - cy).atan2(a.0 as f64 - cx);
            let tb = (b.1 as f64 - cy).atan2(b.0 as f64 - cx);
            ta.partial_cmp(&tb).unwrap()
        });
        let mut total = 0.0;
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            let d2 = (a.0 - b.0).pow(2) + (a.1 - b.1).pow(2);
            assert!(d2 == 1 || d2 == 2, "oracle path not 8-adjacent");
            total += (d2 as f64).sqrt();
        }
        total
    }

    #[test]
    fn disk_metrics() {
        let lm = disk(32.0, 50.0, 50.0, 101, 101);
        let m = &measure_all(&lm, None)[0];
        assert!((m.diameter_px - 64.0).abs() / 64.0 < 0.01, "{}", m.diameter_px);
        assert!(m.aspect_ratio <= 1.05);
        assert!((m.perimeter_px - angular_perimeter(&lm)).abs() < 1e-9);
        // the chain-code perimeter overestimates a circle by about 5%
        assert!((0.89..0.92).contains(&m.sphericity), "{}", m.sphericity);
        assert!(m.smoothness > 0.9 && m.smoothness <= 1.0);
        assert!((m.centroid_x - 50.0).abs() < 1e-9 && (m.centroid_y - 50.0).abs() < 1e-9);
        assert!(!m.touches_edge);
    }

    #[test]
    fn perimeter_matches_angular_oracle() {
        for (r, cx, cy) in [(3.0, 10.0, 10.0), (7.5, 20.3, 19.8), (12.2, 30.0, 31.5), (20.0, 40.0, 40.0)] {
            let lm = disk(r, cx, cy, 80, 80);
            let m = &measure_all(&lm, None)[0];
            assert!((m.perimeter_px - angular_perimeter(&lm)).abs() < 1e-9, "r {r}");
        }
    }

    #[test]
    fn square_sphericity_near_quarter_pi() {
        for a in [50, 64, 90] {
            let lm = paint(a + 4, a + 4, |x, y| (2..a + 2).contains(&x) && (2..a + 2).contains(&y));
            let m = &measure_all(&lm, None)[0];
            assert_eq!(m.perimeter_px, 4.0 * (a as f64 - 1.0));
            let target = std::f64::consts::FRAC_PI_4;
            assert!((m.sphericity - target).abs() / target < 0.05, "{a}: {}", m.sphericity);
            assert!((m.smoothness - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rectangle_aspect_ratio() {
        let lm = paint(120, 30, |x, y| (5..105).contains(&x) && (10..20).contains(&y));
        let m = &measure_all(&lm, None)[0];
        assert!((m.aspect_ratio - 10.0).abs() / 10.0 < 0.05, "{}", m.aspect_ratio);
        let tall = paint(30, 120, |x, y| (10..20).contains(&x) && (5..105).contains(&y));
        assert!((measure_all(&tall, None)[0].aspect_ratio - m.aspect_ratio).abs() < 1e-9);
    }

    #[test]
    fn clipped_disk_touches_edge() {
        let lm = disk(10.0, 3.0, 20.0, 40, 40);
        assert!(measure_all(&lm, None)[0].touches_edge);
    }

    #[test]
    fn degenerate_shapes() {
        let dot = paint(5, 5, |x, y| x == 2 && y == 2);
        let m = &measure_all(&dot, None)[0];
        assert_eq!((m.perimeter_px, m.sphericity, m.smoothness, m.aspect_ratio), (0.0, 1.0, 1.0, 1.0));
        let line = paint(20, 5, |x, y| y == 2 && (3..13).contains(&x));
        let m = &measure_all(&line, None)[0];
        assert_eq!(m.perimeter_px, 18.0);
        assert!((m.smoothness - 1.0).abs() < 1e-12);
        assert!(m.aspect_ratio.is_finite() && m.aspect_ratio > 5.0);
        let diag = paint(10, 10, |x, y| x == y);
        let m = &measure_all(&diag, None)[0];
        assert!((m.perimeter_px - 18.0 * std::f64::consts::SQRT_2).abs() < 1e-9);
        assert!(measure_all(&LabelMap::new(4, 4), None).is_empty());
    }

    #[test]
    fn non_convex_shape_is_less_smooth() {
        // a U shape
        let lm = paint(40, 40, |x, y| (5..35).contains(&x) && (5..35).contains(&y) && !((15..25).contains(&x) && y < 28));
        let m = &measure_all(&lm, None)[0];
        assert!(m.smoothness < 0.8, "{}", m.smoothness);
        assert!(m.smoothness > 0.0);
    }

    #[test]
    fn ids_sorted_and_calibrated() {
        let mut lm = LabelMap::new(30, 10);
        for x in 0..5 {
            lm.set(x + 20, 5, 1);
            lm.set(x + 2, 2, 2);
        }
        let c = calibrate_length(100, 50.0, LengthUnit::Nanometer).unwrap();
        let ms = measure_all(&lm, Some(&c));
        assert_eq!(ms.iter().map(|m| m.id).collect::<Vec<_>>(), vec![1, 2]);
        assert!((ms[0].diameter_phys.unwrap() - ms[0].diameter_px * 0.5).abs() < 1e-12);
    }

    #[test]
    fn hull_of_points() {
        assert_eq!(hull_perimeter(&[(0, 0), (3, 0), (3, 4), (0, 4), (1, 1)]), 14.0);
        assert_eq!(hull_perimeter(&[(0, 0), (2, 0), (5, 0)]), 10.0);
        assert_eq!(hull_perimeter(&[(1, 1)]), 0.0);
    }
}
