use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::font::{render_text, text_size};
use super::scene::{gen_scene, SceneSpec, Shape, Texture};
use super::SynthError;
use crate::imagecore::Raster8;
use crate::scalebar::{BBox, LengthUnit};

const VALUES: [u32; 9] = [1, 2, 5, 10, 20, 50, 100, 200, 500];
const UNITS: [LengthUnit; 3] = [LengthUnit::Nanometer, LengthUnit::Micrometer, LengthUnit::Millimeter];
/// Backgrounds stay clear of the saturated levels used for bars and text.
const BG_MIN: u8 = 20;
const BG_MAX: u8 = 235;
const EDGE_MARGIN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarStyle {
    Plain,
    EndTicks,
    Panel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    LightOnDark,
    DarkOnLight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarColor {
    White,
    Black,
    Red,
    Green,
    Blue,
    Yellow,
}

impl BarColor {
    fn rgb(self) -> [u8; 3] {
        match self {
            Self::White => [255, 255, 255],
            Self::Black => [0, 0, 0],
            Self::Red => [255, 0, 0],
            Self::Green => [0, 255, 0],
            Self::Blue => [0, 0, 255],
            Self::Yellow => [255, 255, 0],
        }
    }

    fn polarity(self) -> Polarity {
        if self == Self::Black {
            Polarity::DarkOnLight
        } else {
            Polarity::LightOnDark
        }
    }

    fn is_gray(self) -> bool {
        matches!(self, Self::White | Self::Black)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleBarBackground {
    Scene,
    Flat,
}

/// Scale-bar image recipe. Unset options are drawn from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleBarSpec {
    pub width: usize,
    pub height: usize,
    pub bar_length_px: Option<usize>,
    pub bar_thickness: Option<usize>,
    pub style: Option<BarStyle>,
    pub polarity: Option<Polarity>,
    pub color: Option<BarColor>,
    pub value: Option<u32>,
    pub unit: Option<LengthUnit>,
    pub font_scale: Option<usize>,
    pub background: Option<ScaleBarBackground>,
    pub seed: u64,
}

impl Default for ScaleBarSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            bar_length_px: None,
            bar_thickness: None,
            style: None,
            polarity: None,
            color: None,
            value: None,
            unit: None,
            font_scale: None,
            background: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleBarTruth {
    /// Tight box around the drawn bar including ticks.
    pub bar_bbox: BBox,
    pub x_left: usize,
    pub x_right: usize,
    pub row: usize,
    pub pixel_length: usize,
    pub text: String,
    pub text_bbox: BBox,
    pub value: f64,
    pub unit: LengthUnit,
    pub style: BarStyle,
    pub color: BarColor,
    pub thickness: usize,
}

fn pick<T: Copy, R: Rng>(rng: &mut R, set: &[T]) -> T {
    *set.choose(rng).expect("nonempty")
}

/// Renders a labeled scale bar over a particle scene or flat background.
pub fn gen_scalebar_image(spec: &ScaleBarSpec) -> Result<(Raster8, ScaleBarTruth), SynthError> {
    let (w, h) = (spec.width, spec.height);
    if w < 40 || h < 20 {
        return Err(SynthError::CanvasTooSmall);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let style = spec.style.unwrap_or_else(|| pick(&mut rng, &[BarStyle::Plain, BarStyle::EndTicks, BarStyle::Panel]));
    let color = match (spec.color, spec.polarity) {
        (Some(c), Some(p)) if c.polarity() != p => return Err(SynthError::InvalidSpec("bar colour contradicts polarity")),
        (Some(c), _) => c,
        (None, Some(Polarity::DarkOnLight)) => BarColor::Black,
        (None, Some(Polarity::LightOnDark)) => {
            if rng.gen_bool(0.6) {
                BarColor::White
            } else {
                pick(&mut rng, &[BarColor::Red, BarColor::Green, BarColor::Blue, BarColor::Yellow])
            }
        }
        (None, None) => {
            let r: f64 = rng.gen();
            if r < 0.35 {
                BarColor::Black
            } else if r < 0.8 {
                BarColor::White
            } else {
                pick(&mut rng, &[BarColor::Red, BarColor::Green, BarColor::Blue, BarColor::Yellow])
            }
        }
    };
    let polarity = color.polarity();

    let thickness = spec.bar_thickness.unwrap_or_else(|| rng.gen_range(2..=12));
    if !(2..=12).contains(&thickness) {
        return Err(SynthError::InvalidSpec("bar thickness must lie in 2..=12"));
    }
    let scale = spec.font_scale.unwrap_or_else(|| rng.gen_range(1..=3));
    if !(1..=3).contains(&scale) {
        return Err(SynthError::InvalidSpec("font scale must lie in 1..=3"));
    }
    let value = spec.value.unwrap_or_else(|| pick(&mut rng, &VALUES));
    let unit = spec.unit.unwrap_or_else(|| pick(&mut rng, &UNITS));
    if value == 0 {
        return Err(SynthError::InvalidSpec("value must be positive"));
    }
    let spaced = rng.gen_bool(0.7);
    let symbol = match unit {
        LengthUnit::Micrometer if rng.gen_bool(0.3) => "um",
        LengthUnit::Angstrom => "Å",
        u => u.symbol(),
    };
    let text = format!("{value}{}{symbol}", if spaced { " " } else { "" });
    let (text_w, text_h) = text_size(&text, scale).ok_or(SynthError::InvalidSpec("label not renderable"))?;

    let (tick_ext, tick_w) = if style == BarStyle::EndTicks { (rng.gen_range(2..=5), rng.gen_range(2..=3)) } else { (0, 0) };
    let bar_h = thickness + 2 * tick_ext;
    let lo = 20.max(5 * bar_h);
    let hi = (w * 4 / 5).min(1000);
    let length = match spec.bar_length_px {
        Some(l) if l < lo || l > hi => return Err(SynthError::InvalidSpec("bar length outside the allowed range")),
        Some(l) => l,
        None if lo > hi => return Err(SynthError::CanvasTooSmall),
        None => rng.gen_range(lo..=hi),
    };

    let gap = rng.gen_range(3..=8);
    let pad = if style == BarStyle::Panel { 6 } else { 0 };
    let group_w = length.max(text_w);
    let group_h = text_h + gap + bar_h;
    let margin = EDGE_MARGIN + pad;
    if group_w + 2 * margin > w || group_h + 2 * margin > h {
        return Err(SynthError::TextOverflow);
    }
    let gx = rng.gen_range(margin..=w - margin - group_w);
    let gy = rng.gen_range(margin..=h - margin - group_h);
    let text_above = rng.gen_bool(0.7);
    let (bar_y, text_y) = if text_above { (gy + text_h + gap, gy) } else { (gy, gy + bar_h + gap) };
    let bar_x = gx + (group_w - length) / 2;
    let text_x = gx + (group_w - text_w) / 2;

    let background = spec.background.unwrap_or_else(|| if rng.gen_bool(0.6) { ScaleBarBackground::Scene } else { ScaleBarBackground::Flat });
    let mut img = match background {
        ScaleBarBackground::Flat => Raster8::filled(w, h, 1, rng.gen_range(BG_MIN..=BG_MAX)),
        ScaleBarBackground::Scene => {
            let mut s = SceneSpec::new(w, h, rng.gen_range(10..=60), pick(&mut rng, &[Shape::Disk, Shape::Ellipse, Shape::Polygon]), rng.gen_range(2.5..4.0), 0.3, rng.gen());
            s.background_gray = rng.gen_range(70..=180);
            s.max_pairwise_iou = 0.2;
            s.texture = pick(&mut rng, &[Texture::Flat, Texture::Shaded, Texture::Noisy { sigma: 3.0 }]);
            let (mut scene, _) = gen_scene(&s).map_err(|_| SynthError::CanvasTooSmall)?;
            for v in scene.data_mut() {
                *v = (*v).clamp(BG_MIN, BG_MAX);
            }
            scene
        }
    };
    if !color.is_gray() {
        img = img.to_rgb();
    }

    if style == BarStyle::Panel {
        let shade = if polarity == Polarity::LightOnDark { rng.gen_range(30..=60) } else { rng.gen_range(200..=225) };
        for y in gy - pad..gy + group_h + pad {
            for x in gx - pad..gx + group_w + pad {
                img.set_all(x, y, shade);
            }
        }
    }

    let rgb = color.rgb();
    let put = |img: &mut Raster8, x: usize, y: usize| {
        if img.channels() == 1 {
            img.set(x, y, 0, rgb[0]);
        } else {
            img.set_rgb(x, y, rgb);
        }
    };
    for y in bar_y + tick_ext..bar_y + tick_ext + thickness {
        for x in bar_x..bar_x + length {
            put(&mut img, x, y);
        }
    }
    if style == BarStyle::EndTicks {
        for y in bar_y..bar_y + bar_h {
            for x in (bar_x..bar_x + tick_w).chain(bar_x + length - tick_w..bar_x + length) {
                put(&mut img, x, y);
            }
        }
    }
    render_text(&text, scale, text_x, text_y, |x, y| put(&mut img, x, y));

    let truth = ScaleBarTruth {
        bar_bbox: BBox::new(bar_x, bar_y, length, bar_h),
        x_left: bar_x,
        x_right: bar_x + length - 1,
        row: bar_y + tick_ext + thickness / 2,
        pixel_length: length,
        text,
        text_bbox: BBox::new(text_x, text_y, text_w, text_h),
        value: value as f64,
        unit,
        style,
        color,
        thickness,
    };
    Ok((img, truth))
}
