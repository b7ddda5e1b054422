//! A particle scene above an instrument-style info strip carrying a
//! scale bar, with the text detection an OCR stage would report.

use serde::{Deserialize, Serialize};

use super::font::render_text;
use super::scalebar::{BarColor, BarStyle, ScaleBarTruth};
use super::scene::{gen_scene, SceneSpec, SceneTruth};
use super::{font::text_size, SynthError};
use crate::imagecore::{LabelMap, Raster8};
use crate::scalebar::{BBox, DetectionKind, ExternalDetection, LengthUnit};

pub const STRIP_HEIGHT: usize = 56;
const STRIP_GRAY: u8 = 25;
const INK: u8 = 250;
const BAR_THICKNESS: usize = 6;
const FONT_SCALE: usize = 2;
const MARGIN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrographSpec {
    /// Scene part only; the strip adds `STRIP_HEIGHT` rows below it.
    pub scene: SceneSpec,
    pub bar_length_px: usize,
    pub value: u32,
    pub unit: LengthUnit,
}

impl MicrographSpec {
    /// Square image of side `size` whose scene fills all but the strip.
    pub fn square(size: usize, scene: SceneSpec, bar_length_px: usize, value: u32, unit: LengthUnit) -> Self {
        let scene = SceneSpec { width: size, height: size.saturating_sub(STRIP_HEIGHT), ..scene };
        Self { scene, bar_length_px, value, unit }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Micrograph {
    pub image: Raster8,
    /// Label map covers the full image; the strip is background.
    pub truth: SceneTruth,
    pub bar: ScaleBarTruth,
    pub detections: Vec<ExternalDetection>,
}

pub fn gen_micrograph(spec: &MicrographSpec) -> Result<Micrograph, SynthError> {
    let (w, sh) = (spec.scene.width, spec.scene.height);
    let text = format!("{} {}", spec.value, spec.unit.symbol());
    let (tw, th) = text_size(&text, FONT_SCALE).ok_or(SynthError::InvalidSpec("label not renderable"))?;
    if spec.value == 0 {
        return Err(SynthError::InvalidSpec("value must be positive"));
    }
    if spec.bar_length_px < 20 || spec.bar_length_px.max(tw) + 2 * MARGIN > w {
        return Err(SynthError::InvalidSpec("bar length outside the allowed range"));
    }
    let (scene, mut truth) = gen_scene(&spec.scene)?;
    let h = sh + STRIP_HEIGHT;
    let mut image = Raster8::filled(w, h, 1, STRIP_GRAY);
    let gray = scene.to_gray();
    image.data_mut()[..w * sh].copy_from_slice(gray.data());
    let mut labels = truth.label_map.clone().into_vec();
    labels.resize(w * h, 0);
    truth.label_map = LabelMap::from_vec(w, h, labels).expect("sized");

    let group_w = spec.bar_length_px.max(tw);
    let text_x = MARGIN + (group_w - tw) / 2;
    let text_y = sh + 8;
    let bar_x = MARGIN + (group_w - spec.bar_length_px) / 2;
    let bar_y = text_y + th + 6;
    for y in bar_y..bar_y + BAR_THICKNESS {
        for x in bar_x..bar_x + spec.bar_length_px {
            image.set(x, y, 0, INK);
        }
    }
    render_text(&text, FONT_SCALE, text_x, text_y, |x, y| image.set(x, y, 0, INK));

    let text_bbox = BBox::new(text_x, text_y, tw, th);
    let bar = ScaleBarTruth {
        bar_bbox: BBox::new(bar_x, bar_y, spec.bar_length_px, BAR_THICKNESS),
        x_left: bar_x,
        x_right: bar_x + spec.bar_length_px - 1,
        row: bar_y + BAR_THICKNESS / 2,
        pixel_length: spec.bar_length_px,
        text: text.clone(),
        text_bbox,
        value: spec.value as f64,
        unit: spec.unit,
        style: BarStyle::Plain,
        color: BarColor::White,
        thickness: BAR_THICKNESS,
    };
    let detections = vec![ExternalDetection { bbox: text_bbox, kind: DetectionKind::Text, text: Some(text), confidence: 0.9 }];
    Ok(Micrograph { image, truth, bar, detections })
}
