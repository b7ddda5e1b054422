use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PixelRect;

/// Per-pixel instance ids; 0 is background.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    /// An all-background map.
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, labels: vec![0; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, labels: Vec<u32>) -> Option<Self> {
        (labels.len() == width * height).then_some(Self { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u32] {
        &mut self.labels
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, id: u32) {
        self.labels[y * self.width + x] = id;
    }

    pub fn max_id(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Pixel count per nonzero id, ordered by id.
    pub fn areas(&self) -> BTreeMap<u32, usize> {
        let mut areas = BTreeMap::new();
        for &l in self.labels.iter().filter(|&&l| l != 0) {
            *areas.entry(l).or_insert(0) += 1;
        }
        areas
    }

    /// Number of distinct nonzero ids.
    pub fn instance_count(&self) -> usize {
        if self.is_canonical_ids() {
            return self.max_id() as usize;
        }
        self.areas().len()
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Bounding rectangle of every nonzero id, ordered by id.
    pub fn bounding_boxes(&self) -> BTreeMap<u32, PixelRect> {
        let mut boxes: BTreeMap<u32, PixelRect> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate().filter(|(_, &l)| l != 0) {
            let (x, y) = (i % self.width, i / self.width);
            boxes.entry(l).and_modify(|r| r.include(x, y)).or_insert_with(|| PixelRect::point(x, y));
        }
        boxes
    }

    /// Binary mask of one id.
    pub fn mask_of(&self, id: u32) -> Vec<bool> {
        self.labels.iter().map(|&l| l == id).collect()
    }

    /// True when the ids are gap-free, ordered by first raster occurrence and
    /// every id is a single 4-connected region.
    pub fn is_canonical(&self) -> bool {
        *self == canonicalize_labels(self)
    }

    fn is_canonical_ids(&self) -> bool {
        let mut next = 1u32;
        for &l in &self.labels {
            if l == next {
                next += 1;
            } else if l > next {
                return false;
            }
        }
        true
    }
}

/// Renumbers ids to 1..K by first raster occurrence, splitting any id whose
/// pixels form several 4-connected regions into distinct ids.
pub fn canonicalize_labels(lm: &LabelMap) -> LabelMap {
    let (w, h) = (lm.width, lm.height);
    let src = &lm.labels;
    let mut out = vec![0u32; src.len()];
    let mut next = 0u32;
    let mut stack: Vec<usize> = Vec::new();
    for start in 0..src.len() {
        let id = src[start];
        if id == 0 || out[start] != 0 {
            continue;
        }
        next += 1;
        out[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if src[j] == id && out[j] == 0 {
                    out[j] = next;
                    stack.push(j);
                }
            };
            if y > 0 {
                visit(i - w);
            }
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
    }
    LabelMap { width: w, height: h, labels: out }
}
