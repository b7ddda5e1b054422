//! Scale-bar recognition: bar candidates, endpoint localization, label
//! parsing, bar–text matching and the pixel-to-physical calibration.

mod detect;
mod endpoints;
mod units;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detect::{
    find_bar_candidates, parse_external, split_external, BBox, BarDetection, DetectionKind, DetectionSource, ExternalDetection,
    TextDetection,
};
pub use endpoints::{localize_endpoints, select_edge_channel, EndpointResult};
pub use units::{parse_label_text, LengthUnit};

use crate::imagecore::Raster8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaleBarError {
    #[error("bounding box smaller than 3x3")]
    DegenerateBBox,
    #[error("bounding box {0:?} extends outside the image")]
    BBoxOutOfImage(BBox),
    #[error("fewer than two qualifying edge peaks")]
    LocalizationFailed { profile: Vec<f64> },
    #[error("no <number> <unit> label found")]
    NoMatch,
    #[error("unknown unit {0:?}")]
    UnknownUnit(String),
    #[error("scale value must be positive")]
    NonPositiveValue,
    #[error("bar pixel length must be at least 2")]
    DegenerateLength,
    #[error("ground-truth length must be positive")]
    ZeroTruth,
    #[error("invalid detection: {0}")]
    InvalidDetection(&'static str),
    #[error("unreadable detections: {0}")]
    Detections(String),
    #[error("no scale bar found")]
    NoBar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleBarParams {
    pub min_text_confidence: f64,
    pub threshold_window: usize,
    pub threshold_c: i32,
    pub peak_amplitude: f64,
    pub peak_sharpness: f64,
    pub sharpness_radius: usize,
}

impl Default for ScaleBarParams {
    fn default() -> Self {
        Self {
            min_text_confidence: 0.15,
            threshold_window: 31,
            threshold_c: 5,
            peak_amplitude: 0.5,
            peak_sharpness: 1.5,
            sharpness_radius: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleCalibration {
    pub value: f64,
    pub unit: LengthUnit,
    pub pixel_length: usize,
    pub nm_per_pixel: f64,
}

impl ScaleCalibration {
    /// Same physical label read over a different pixel length.
    pub fn with_pixel_length(&self, pixel_length: usize) -> Result<Self, ScaleBarError> {
        calibrate_length(pixel_length, self.value, self.unit)
    }
}

pub fn calibrate(e: &EndpointResult, value: f64, unit: LengthUnit) -> Result<ScaleCalibration, ScaleBarError> {
    calibrate_length(e.pixel_length, value, unit)
}

pub fn calibrate_length(pixel_length: usize, value: f64, unit: LengthUnit) -> Result<ScaleCalibration, ScaleBarError> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(ScaleBarError::NonPositiveValue);
    }
    if pixel_length < 2 {
        return Err(ScaleBarError::DegenerateLength);
    }
    Ok(ScaleCalibration { value, unit, pixel_length, nm_per_pixel: value * unit.in_nm() / pixel_length as f64 })
}

/// Signed relative length error `(recognized - truth) / truth`.
pub fn length_error(recognized: f64, truth: f64) -> Result<f64, ScaleBarError> {
    if truth == 0.0 {
        return Err(ScaleBarError::ZeroTruth);
    }
    Ok((recognized - truth) / truth)
}

/// A bar paired with the label that describes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarTextPair {
    pub bar: BarDetection,
    pub text: TextDetection,
    pub value: f64,
    pub unit: LengthUnit,
}

fn distance2(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).powi(2) + (ay - by).powi(2)
}

/// Pairs each confident, parseable text with its nearest bar by centre
/// distance; a bar claimed by several texts keeps the nearest. Ties go to
/// the box first in raster order. Pairs follow the input bar order.
pub fn match_text_to_bar(bars: &[BarDetection], texts: &[TextDetection], min_conf: f64) -> Vec<BarTextPair> {
    let raster = |b: &BBox| (b.y, b.x);
    let mut claims: Vec<Option<(usize, f64)>> = vec![None; bars.len()];
    for (ti, t) in texts.iter().enumerate() {
        if t.confidence < min_conf || parse_label_text(&t.text).is_err() {
            continue;
        }
        let nearest = bars
            .iter()
            .enumerate()
            .map(|(bi, b)| (bi, distance2(&b.bbox, &t.bbox)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(raster(&bars[a.0].bbox).cmp(&raster(&bars[b.0].bbox))));
        let Some((bi, d)) = nearest else { continue };
        let better = match claims[bi] {
            None => true,
            Some((prev, pd)) => d < pd || (d == pd && raster(&t.bbox) < raster(&texts[prev].bbox)),
        };
        if better {
            claims[bi] = Some((ti, d));
        }
    }
    claims
        .iter()
        .enumerate()
        .filter_map(|(bi, c)| {
            let (ti, _) = (*c)?;
            let (value, unit) = parse_label_text(&texts[ti].text).ok()?;
            Some(BarTextPair { bar: bars[bi].clone(), text: texts[ti].clone(), value, unit })
        })
        .collect()
}

/// Result of recognizing the scale bar of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReading {
    pub bar: BarDetection,
    pub endpoints: EndpointResult,
    pub text: Option<TextDetection>,
    pub calibration: Option<ScaleCalibration>,
}

/// Flat output record of the `scalebar` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleOutput {
    pub bar_bbox: BBox,
    pub x_left: usize,
    pub x_right: usize,
    pub pixel_length: usize,
    pub value: Option<f64>,
    pub unit: Option<LengthUnit>,
    pub nm_per_pixel: Option<f64>,
}

impl ScaleReading {
    pub fn output(&self) -> ScaleOutput {
        ScaleOutput {
            bar_bbox: self.bar.bbox,
            x_left: self.endpoints.x_left,
            x_right: self.endpoints.x_right,
            pixel_length: self.endpoints.pixel_length,
            value: self.calibration.map(|c| c.value),
            unit: self.calibration.map(|c| c.unit),
            nm_per_pixel: self.calibration.map(|c| c.nm_per_pixel),
        }
    }
}

/// Full recognition. External bar boxes replace the heuristic finder when
/// present; label strings only come from external text detections. Matched
/// bars are tried first, then the remaining bars by confidence; the first
/// that localizes wins.
pub fn recognize(img: &Raster8, external: &[ExternalDetection], params: &ScaleBarParams) -> Result<ScaleReading, ScaleBarError> {
    let (ext_bars, texts) = split_external(external, img.width(), img.height())?;
    let bars = if ext_bars.is_empty() { find_bar_candidates(img) } else { ext_bars };
    let pairs = match_text_to_bar(&bars, &texts, params.min_text_confidence);
    let mut order: Vec<(BarDetection, Option<&BarTextPair>)> = Vec::new();
    for p in &pairs {
        order.push((p.bar.clone(), Some(p)));
    }
    for b in &bars {
        if !pairs.iter().any(|p| p.bar == *b) {
            order.push((b.clone(), None));
        }
    }
    let mut last_err = ScaleBarError::NoBar;
    for (bar, pair) in order {
        match localize_endpoints(img, &bar.bbox, params) {
            Ok(endpoints) => {
                let calibration = match pair {
                    Some(p) => Some(calibrate(&endpoints, p.value, p.unit)?),
                    None => None,
                };
                return Ok(ScaleReading { bar, endpoints, text: pair.map(|p| p.text.clone()), calibration });
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}
