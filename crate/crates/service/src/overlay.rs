use std::collections::BTreeSet;

use granula_core::imagecore::{LabelMap, Raster8};
use granula_core::pipeline::ScaleStatus;
use granula_core::scalebar::BBox;

const FILL_ALPHA: f64 = 0.4;
const DIM_ALPHA: f64 = 0.2;
const DIM: [u8; 3] = [128, 128, 128];
const BAR_OUTLINE: [u8; 3] = [255, 0, 0];
const TEXT_OUTLINE: [u8; 3] = [0, 200, 0];

/// Distinct colour per id: golden-ratio hue steps at full value.
pub fn instance_color(id: u32) -> [u8; 3] {
    let h = (id as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let (s, v) = (0.75, 255.0);
    let f = h.fract();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match h as u32 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r.round() as u8, g.round() as u8, b.round() as u8]
}

fn blend(a: u8, b: u8, alpha: f64) -> u8 {
    (a as f64 * (1.0 - alpha) + b as f64 * alpha).round() as u8
}

fn outline(img: &mut Raster8, b: BBox, rgb: [u8; 3]) {
    let (w, h) = (img.width(), img.height());
    if b.w == 0 || b.h == 0 || b.x >= w || b.y >= h {
        return;
    }
    let (x1, y1) = ((b.x1() - 1).min(w - 1), (b.y1() - 1).min(h - 1));
    for x in b.x..=x1 {
        img.set_rgb(x, b.y, rgb);
        img.set_rgb(x, y1, rgb);
    }
    for y in b.y..=y1 {
        img.set_rgb(b.x, y, rgb);
        img.set_rgb(x1, y, rgb);
    }
}

/// Image with instance masks blended in. Instances outside the filter are
/// dimmed grey; contours are drawn opaque. The scale bar is boxed red and
/// its label green.
pub fn render_overlay(image: &Raster8, labels: &LabelMap, kept: &BTreeSet<u32>, scale: &ScaleStatus) -> Raster8 {
    let mut out = image.to_rgb();
    let (w, h) = (labels.width(), labels.height());
    let lab = labels.labels();
    for y in 0..h {
        for x in 0..w {
            let id = lab[y * w + x];
            if id == 0 {
                continue;
            }
            let edge = x == 0 || y == 0 || x + 1 == w || y + 1 == h || lab[y * w + x - 1] != id || lab[y * w + x + 1] != id || lab[(y - 1) * w + x] != id || lab[(y + 1) * w + x] != id;
            let (rgb, alpha) = if kept.contains(&id) { (instance_color(id), FILL_ALPHA) } else { (DIM, DIM_ALPHA) };
            let alpha = if edge { 1.0 } else { alpha };
            let px = [0, 1, 2].map(|c| blend(out.get(x, y, c), rgb[c], alpha));
            out.set_rgb(x, y, px);
        }
    }
    if let Some(r) = &scale.reading {
        outline(&mut out, r.bar_bbox, BAR_OUTLINE);
    }
    if let Some(t) = &scale.text {
        outline(&mut out, t.bbox, TEXT_OUTLINE);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors_are_distinct_and_stable() {
        let cs: BTreeSet<[u8; 3]> = (1..=50).map(instance_color).collect();
        assert_eq!(cs.len(), 50);
        assert_eq!(instance_color(7), instance_color(7));
    }

    #[test]
    fn overlay_marks_only_foreground() {
        let img = Raster8::filled(8, 8, 1, 100);
        let mut lm = LabelMap::new(8, 8);
        for y in 2..6 {
            for x in 2..6 {
                lm.set(x, y, 1);
            }
        }
        let scale = ScaleStatus { reading: None, calibration: None, text: None, error: None };
        let o = render_overlay(&img, &lm, &[1].into_iter().collect(), &scale);
        assert_eq!(o.channels(), 3);
        assert_eq!([o.get(0, 0, 0), o.get(0, 0, 1), o.get(0, 0, 2)], [100, 100, 100]);
        assert_eq!([o.get(2, 2, 0), o.get(2, 2, 1), o.get(2, 2, 2)], instance_color(1));
        assert_ne!(o.get(3, 3, 0), 100);
    }
}
