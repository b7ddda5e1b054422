//! Manual label edits. Ids are stable: an edit never renumbers instances it
//! does not touch, and new instances take fresh ids that are never reused.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{LabelMap, NEIGHBORS_4};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrectionAction {
    Delete { id: u32 },
    /// The merged instance keeps the smallest id.
    Merge { ids: Vec<u32> },
    /// Cuts along a polyline of `[x, y]` pixel coordinates.
    Split { id: u32, polyline: Vec<[f64; 2]> },
    /// Paints a simple polygon onto background pixels.
    Add { polygon: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorrectionError {
    #[error("unknown instance id {0}")]
    UnknownId(u32),
    #[error("merge needs at least two distinct ids")]
    MergeTooFew,
    #[error("merged instances do not touch")]
    MergeDisconnected,
    #[error("split polyline needs at least two points")]
    SplitTooShort,
    #[error("split polyline does not cut instance {0} into separate parts")]
    SplitIneffective(u32),
    #[error("polygon needs at least three vertices")]
    PolygonTooFew,
    #[error("polygon edges intersect")]
    PolygonSelfIntersecting,
    #[error("polygon covers no background pixel")]
    PolygonEmpty,
    #[error("coordinate is not finite")]
    NonFinite,
}

/// Labels plus the next unused id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditState {
    pub labels: LabelMap,
    pub next_id: u32,
}

/// Ids touched by an edit.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditEffect {
    pub removed: Vec<u32>,
    pub created: Vec<u32>,
    pub changed: Vec<u32>,
}

impl EditState {
    pub fn new(labels: LabelMap) -> Self {
        let next_id = labels.max_id() + 1;
        Self { labels, next_id }
    }

    fn has(&self, id: u32) -> bool {
        id != 0 && self.labels.labels().contains(&id)
    }

    /// Applies `action` or leaves the state untouched on error.
    pub fn apply(&mut self, action: &CorrectionAction) -> Result<EditEffect, CorrectionError> {
        match action {
            CorrectionAction::Delete { id } => self.delete(*id),
            CorrectionAction::Merge { ids } => self.merge(ids),
            CorrectionAction::Split { id, polyline } => self.split(*id, polyline),
            CorrectionAction::Add { polygon } => self.add(polygon),
        }
    }

    fn delete(&mut self, id: u32) -> Result<EditEffect, CorrectionError> {
        if !self.has(id) {
            return Err(CorrectionError::UnknownId(id));
        }
        for v in self.labels.labels_mut() {
            if *v == id {
                *v = 0;
            }
        }
        Ok(EditEffect { removed: vec![id], ..Default::default() })
    }

    fn merge(&mut self, ids: &[u32]) -> Result<EditEffect, CorrectionError> {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() < 2 {
            return Err(CorrectionError::MergeTooFew);
        }
        if let Some(&bad) = ids.iter().find(|&&i| !self.has(i)) {
            return Err(CorrectionError::UnknownId(bad));
        }
        let keep = ids[0];
        let (w, h) = (self.labels.width(), self.labels.height());
        let merged: Vec<u32> = self.labels.labels().iter().map(|v| if ids.binary_search(v).is_ok() { keep } else { *v }).collect();
        let start = merged.iter().position(|&v| v == keep).expect("kept id present");
        if flood(&merged, w, h, start).len() != merged.iter().filter(|&&v| v == keep).count() {
            return Err(CorrectionError::MergeDisconnected);
        }
        self.labels = LabelMap::from_vec(w, h, merged).expect("same size");
        Ok(EditEffect { removed: ids[1..].to_vec(), changed: vec![keep], ..Default::default() })
    }

    fn split(&mut self, id: u32, polyline: &[[f64; 2]]) -> Result<EditEffect, CorrectionError> {
        if polyline.len() < 2 {
            return Err(CorrectionError::SplitTooShort);
        }
        let pts = round_points(polyline)?;
        if !self.has(id) {
            return Err(CorrectionError::UnknownId(id));
        }
        let (w, h) = (self.labels.width(), self.labels.height());
        let src = self.labels.labels();
        let mut cut = vec![false; w * h];
        for s in pts.windows(2) {
            for (x, y) in bresenham(s[0], s[1]) {
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    let i = y as usize * w + x as usize;
                    cut[i] = src[i] == id;
                }
            }
        }
        // components of the instance with the cut removed
        let mut comp = vec![usize::MAX; w * h];
        let mut sizes = Vec::new();
        for i in 0..w * h {
            if src[i] != id || cut[i] || comp[i] != usize::MAX {
                continue;
            }
            let k = sizes.len();
            let mut n = 0;
            let mut stack = vec![i];
            comp[i] = k;
            while let Some(j) = stack.pop() {
                n += 1;
                for nb in neighbors4(j, w, h) {
                    if src[nb] == id && !cut[nb] && comp[nb] == usize::MAX {
                        comp[nb] = k;
                        stack.push(nb);
                    }
                }
            }
            sizes.push(n);
        }
        if sizes.len() < 2 {
            return Err(CorrectionError::SplitIneffective(id));
        }
        // cut pixels join the nearest part, spreading along the cut
        let mut queue: VecDeque<usize> = (0..w * h).filter(|&i| comp[i] != usize::MAX && src[i] == id).collect();
        while let Some(j) = queue.pop_front() {
            for nb in neighbors4(j, w, h) {
                if cut[nb] && comp[nb] == usize::MAX {
                    comp[nb] = comp[j];
                    queue.push_back(nb);
                }
            }
        }
        let mut ids_for = vec![id];
        for _ in 1..sizes.len() {
            ids_for.push(self.next_id);
            self.next_id += 1;
        }
        let labels = self.labels.labels_mut();
        for i in 0..w * h {
            if labels[i] == id {
                labels[i] = if comp[i] == usize::MAX { 0 } else { ids_for[comp[i]] };
            }
        }
        Ok(EditEffect { changed: vec![id], created: ids_for[1..].to_vec(), ..Default::default() })
    }

    fn add(&mut self, polygon: &[[f64; 2]]) -> Result<EditEffect, CorrectionError> {
        if polygon.len() < 3 {
            return Err(CorrectionError::PolygonTooFew);
        }
        if polygon.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CorrectionError::NonFinite);
        }
        if self_intersects(polygon) {
            return Err(CorrectionError::PolygonSelfIntersecting);
        }
        let (w, h) = (self.labels.width(), self.labels.height());
        let src = self.labels.labels();
        let mut inside = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                inside[i] = src[i] == 0 && contains(polygon, x as f64, y as f64);
            }
        }
        // keep the largest connected piece; ties go to the first in raster order
        let mut seen = vec![false; w * h];
        let mut best: Vec<usize> = Vec::new();
        for i in 0..w * h {
            if !inside[i] || seen[i] {
                continue;
            }
            let mut part = vec![i];
            seen[i] = true;
            let mut k = 0;
            while k < part.len() {
                for nb in neighbors4(part[k], w, h) {
                    if inside[nb] && !seen[nb] {
                        seen[nb] = true;
                        part.push(nb);
                    }
                }
                k += 1;
            }
            if part.len() > best.len() {
                best = part;
            }
        }
        if best.is_empty() {
            return Err(CorrectionError::PolygonEmpty);
        }
        let id = self.next_id;
        self.next_id += 1;
        let labels = self.labels.labels_mut();
        for i in best {
            labels[i] = id;
        }
        Ok(EditEffect { created: vec![id], ..Default::default() })
    }
}

fn neighbors4(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = ((i % w) as isize, (i / w) as isize);
    NEIGHBORS_4.iter().filter_map(move |&(dy, dx)| {
        let (nx, ny) = (x + dx, y + dy);
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h).then(|| ny as usize * w + nx as usize)
    })
}

/// Pixels 4-connected to `start` that share its label.
fn flood(labels: &[u32], w: usize, h: usize, start: usize) -> Vec<usize> {
    let id = labels[start];
    let mut seen = vec![false; labels.len()];
    seen[start] = true;
    let mut out = vec![start];
    let mut k = 0;
    while k < out.len() {
        for nb in neighbors4(out[k], w, h) {
            if labels[nb] == id && !seen[nb] {
                seen[nb] = true;
                out.push(nb);
            }
        }
        k += 1;
    }
    out
}

fn round_points(pts: &[[f64; 2]]) -> Result<Vec<(i64, i64)>, CorrectionError> {
    pts.iter()
        .map(|p| if p[0].is_finite() && p[1].is_finite() { Ok((p[0].round() as i64, p[1].round() as i64)) } else { Err(CorrectionError::NonFinite) })
        .collect()
}

/// Integer line from `a` to `b`, both ends included.
pub(crate) fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (dx, dy) = ((b.0 - a.0).abs(), -(b.1 - a.1).abs());
    let (sx, sy) = (if a.0 < b.0 { 1 } else { -1 }, if a.1 < b.1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (a.0, a.1, dx + dy);
    let mut out = Vec::new();
    loop {
        out.push((x, y));
        if (x, y) == b {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Even-odd test of a point against a closed polygon.
fn contains(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi, xj, yj) = (poly[i][0], poly[i][1], poly[j][0], poly[j][1]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_meet(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (d1, d2, d3, d4) = (orient(c, d, a), orient(c, d, b), orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a)) || (d2 == 0.0 && on_segment(c, d, b)) || (d3 == 0.0 && on_segment(a, b, c)) || (d4 == 0.0 && on_segment(a, b, d))
}

/// True when two non-adjacent edges touch, or adjacent edges fold back.
fn self_intersects(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    let edge = |i: usize| (poly[i], poly[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        if a == b {
            return true;
        }
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (c, d) = edge(j);
            if adjacent {
                // shared vertex is fine unless the edges overlap along a line
                let shared = if j == i + 1 { b } else { a };
                let (p, q) = if j == i + 1 { (a, d) } else { (b, c) };
                if orient(shared, p, q) == 0.0 && (p[0] - shared[0]) * (q[0] - shared[0]) + (p[1] - shared[1]) * (q[1] - shared[1]) > 0.0 {
                    return true;
                }
            } else if segments_meet(a, b, c, d) {
                return true;
            }
        }
    }
    false
}
