use serde::{Deserialize, Serialize};

use super::ScaleBarError;
use crate::imagecore::{PixelRect, Raster8};

const LIGHT_MIN: u8 = 240;
const DARK_MAX: u8 = 15;
const MIN_LENGTH: usize = 20;
const MIN_ASPECT: usize = 5;
const RING: usize = 3;

/// Integer rectangle, serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl From<[usize; 4]> for BBox {
    fn from([x, y, w, h]: [usize; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<BBox> for [usize; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl From<PixelRect> for BBox {
    fn from(r: PixelRect) -> Self {
        Self { x: r.x0, y: r.y0, w: r.width(), h: r.height() }
    }
}

impl BBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn x1(&self) -> usize {
        self.x + self.w
    }

    pub fn y1(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x as f64 + self.w as f64 / 2.0, self.y as f64 + self.h as f64 / 2.0)
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w > 0 && self.h > 0 && self.x1() <= width && self.y1() <= height
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x && other.y >= self.y && other.x1() <= self.x1() && other.y1() <= self.y1()
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = self.x1().min(other.x1()).saturating_sub(self.x.max(other.x));
        let iy = self.y1().min(other.y1()).saturating_sub(self.y.max(other.y));
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn expanded(&self, d: usize, width: usize, height: usize) -> BBox {
        let x = self.x.saturating_sub(d);
        let y = self.y.saturating_sub(d);
        BBox { x, y, w: (self.x1() + d).min(width) - x, h: (self.y1() + d).min(height) - y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionSource {
    Heuristic,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarDetection {
    pub bbox: BBox,
    pub confidence: f64,
    pub source: DetectionSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextDetection {
    pub bbox: BBox,
    pub text: String,
    pub confidence: f64,
}

/// One entry of an external detections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalDetection {
    pub bbox: BBox,
    pub kind: DetectionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionKind {
    Bar,
    Text,
}

/// Splits external detections into bars and texts, validating each box
/// against the image and each confidence against [0, 1].
pub fn split_external(
    dets: &[ExternalDetection],
    width: usize,
    height: usize,
) -> Result<(Vec<BarDetection>, Vec<TextDetection>), ScaleBarError> {
    let mut bars = Vec::new();
    let mut texts = Vec::new();
    for d in dets {
        if !d.bbox.fits(width, height) {
            return Err(ScaleBarError::BBoxOutOfImage(d.bbox));
        }
        if !(0.0..=1.0).contains(&d.confidence) {
            return Err(ScaleBarError::InvalidDetection("confidence outside [0, 1]"));
        }
        match d.kind {
            DetectionKind::Bar => bars.push(BarDetection { bbox: d.bbox, confidence: d.confidence, source: DetectionSource::External }),
            DetectionKind::Text => {
                let text = d.text.clone().ok_or(ScaleBarError::InvalidDetection("text detection without text"))?;
                texts.push(TextDetection { bbox: d.bbox, text, confidence: d.confidence });
            }
        }
    }
    bars.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    Ok((bars, texts))
}

pub fn parse_external(json: &str) -> Result<Vec<ExternalDetection>, ScaleBarError> {
    serde_json::from_str(json).map_err(|e| ScaleBarError::Detections(e.to_string()))
}

fn max_channel(img: &Raster8) -> Vec<u8> {
    let c = img.channels();
    img.data().chunks_exact(c).map(|px| *px.iter().max().unwrap()).collect()
}

/// Heuristic bar finder: saturated light or dark 4-connected regions at
/// least 20 px wide with width ≥ 5 × height. Boxes are tight;
/// confidence is the inside-versus-surround contrast over 255.
pub fn find_bar_candidates(img: &Raster8) -> Vec<BarDetection> {
    let (w, h) = (img.width(), img.height());
    let v = max_channel(img);
    let mut out = Vec::new();
    for light in [true, false] {
        let hit = |p: u8| if light { p >= LIGHT_MIN } else { p <= DARK_MAX };
        let mut seen = vec![false; w * h];
        let mut stack = Vec::new();
        for start in 0..w * h {
            if seen[start] || !hit(v[start]) {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let mut rect = PixelRect::point(start % w, start / w);
            let (mut sum, mut n) = (0u64, 0u64);
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                rect.include(x, y);
                sum += v[i] as u64;
                n += 1;
                for (ok, j) in [(y > 0, i.wrapping_sub(w)), (x > 0, i.wrapping_sub(1)), (x + 1 < w, i + 1), (y + 1 < h, i + w)] {
                    if ok && !seen[j] && hit(v[j]) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            let (bw, bh) = (rect.width(), rect.height());
            if bw < MIN_LENGTH || bw < MIN_ASPECT * bh {
                continue;
            }
            let tight = BBox::from(rect);
            let ring = tight.expanded(RING, w, h);
            let (mut rs, mut rn) = (0u64, 0u64);
            for y in ring.y..ring.y1() {
                for x in ring.x..ring.x1() {
                    let inside = x >= tight.x && x < tight.x1() && y >= tight.y && y < tight.y1();
                    if !inside {
                        rs += v[y * w + x] as u64;
                        rn += 1;
                    }
                }
            }
            let inner = sum as f64 / n as f64;
            let confidence = if rn == 0 { 0.0 } else { ((inner - rs as f64 / rn as f64).abs() / 255.0).clamp(0.0, 1.0) };
            out.push(BarDetection { bbox: tight, confidence, source: DetectionSource::Heuristic });
        }
    }
    out.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then((a.bbox.y, a.bbox.x).cmp(&(b.bbox.y, b.bbox.x))));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_image_has_no_candidates() {
        assert!(find_bar_candidates(&Raster8::filled(100, 80, 1, 128)).is_empty());
        assert!(find_bar_candidates(&Raster8::filled(100, 80, 3, 255)).is_empty());
    }

    #[test]
    fn finds_white_bar_on_dark_panel() {
        let mut img = Raster8::filled(400, 120, 1, 30);
        for y in 90..96 {
            for x in 100..300 {
                img.set(x, y, 0, 255);
            }
        }
        let c = find_bar_candidates(&img);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].bbox, BBox::new(100, 90, 200, 6));
        assert!((c[0].confidence - 225.0 / 255.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_squat_regions() {
        let mut img = Raster8::filled(100, 100, 1, 128);
        for y in 10..20 {
            for x in 10..40 {
                img.set(x, y, 0, 0);
            }
        }
        assert!(find_bar_candidates(&img).is_empty());
    }

    #[test]
    fn bbox_geometry() {
        let a = BBox::new(0, 0, 10, 10);
        let b = BBox::new(5, 0, 10, 10);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(a.expanded(3, 12, 100), BBox::new(0, 0, 12, 13));
        assert_eq!(serde_json::to_string(&a).unwrap(), "[0,0,10,10]");
    }

    #[test]
    fn external_detections_split() {
        let json = r#"[{"bbox":[1,2,30,4],"kind":"bar","confidence":0.9},
                       {"bbox":[1,10,20,7],"kind":"text","text":"5 µm","confidence":0.8}]"#;
        let d = parse_external(json).unwrap();
        let (bars, texts) = split_external(&d, 100, 100).unwrap();
        assert_eq!(bars.len(), 1);
        assert_eq!(bars[0].source, DetectionSource::External);
        assert_eq!(texts[0].text, "5 µm");
        assert!(split_external(&d, 20, 20).is_err());
        assert!(parse_external(r#"[{"bbox":[1,2,3,4],"kind":"blob","confidence":1}]"#).is_err());
    }
}
