//! Per-particle measurements, filtering and weighted size statistics.

mod measure;
mod stats;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalebar::LengthUnit;

pub use measure::{measure_all, InstanceMetrics};
pub use stats::{histogram, percentile, summarize, Binning, HistogramBin, StatsSummary};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetrologyError {
    #[error("no values")]
    Empty,
    #[error("values must be finite")]
    NonFinite,
    #[error("weights must be positive and finite")]
    NonPositiveWeight,
    #[error("values and weights differ in length")]
    LengthMismatch,
    #[error("bin width must be positive and bin count at least 1")]
    InvalidBinning,
    #[error("diameter_min exceeds diameter_max")]
    InvalidBounds,
    #[error("physical quantities need a calibrated measurement")]
    Uncalibrated,
}

/// How much each particle counts toward a distribution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Count,
    Area,
    /// Sphere-equivalent volume, diameter cubed.
    Volume,
}

impl Weighting {
    pub fn weight(self, m: &InstanceMetrics) -> f64 {
        match self {
            Self::Count => 1.0,
            Self::Area => m.area_px,
            Self::Volume => m.diameter_px.powi(3),
        }
    }
}

/// Diameter bounds are inclusive. With `unit` unset they are in pixels,
/// otherwise in that length unit and compared against `diameter_phys`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterCriteria {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<LengthUnit>,
    #[serde(default)]
    pub exclude_edge: bool,
}

impl FilterCriteria {
    pub fn validate(&self) -> Result<(), MetrologyError> {
        match (self.diameter_min, self.diameter_max) {
            (Some(a), Some(b)) if a > b => Err(MetrologyError::InvalidBounds),
            (a, b) if a.is_some_and(f64::is_nan) || b.is_some_and(f64::is_nan) => Err(MetrologyError::InvalidBounds),
            _ => Ok(()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.diameter_min.is_none() && self.diameter_max.is_none() && !self.exclude_edge
    }

    fn diameter_of(&self, m: &InstanceMetrics) -> Result<f64, MetrologyError> {
        match self.unit {
            None => Ok(m.diameter_px),
            Some(u) => m.diameter_phys.map(|nm| nm / u.in_nm()).ok_or(MetrologyError::Uncalibrated),
        }
    }

    pub fn accepts(&self, m: &InstanceMetrics) -> Result<bool, MetrologyError> {
        if self.exclude_edge && m.touches_edge {
            return Ok(false);
        }
        if self.diameter_min.is_none() && self.diameter_max.is_none() {
            return Ok(true);
        }
        let d = self.diameter_of(m)?;
        Ok(self.diameter_min.map_or(true, |lo| d >= lo) && self.diameter_max.map_or(true, |hi| d <= hi))
    }
}

/// Keeps the records accepted by `fc`, in order.
pub fn filter_instances(metrics: &[InstanceMetrics], fc: &FilterCriteria) -> Result<Vec<InstanceMetrics>, MetrologyError> {
    fc.validate()?;
    let mut out = Vec::with_capacity(metrics.len());
    for m in metrics {
        if fc.accepts(m)? {
            out.push(m.clone());
        }
    }
    Ok(out)
}

/// Per-particle scalar that statistics can be taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    DiameterPx,
    /// Nanometres.
    DiameterPhys,
    AreaPx,
    PerimeterPx,
    Sphericity,
    AspectRatio,
    Smoothness,
}

impl Quantity {
    pub const ALL: [Quantity; 7] = [
        Self::DiameterPx,
        Self::DiameterPhys,
        Self::AreaPx,
        Self::PerimeterPx,
        Self::Sphericity,
        Self::AspectRatio,
        Self::Smoothness,
    ];

    pub fn of(self, m: &InstanceMetrics) -> Option<f64> {
        Some(match self {
            Self::DiameterPx => m.diameter_px,
            Self::DiameterPhys => return m.diameter_phys,
            Self::AreaPx => m.area_px,
            Self::PerimeterPx => m.perimeter_px,
            Self::Sphericity => m.sphericity,
            Self::AspectRatio => m.aspect_ratio,
            Self::Smoothness => m.smoothness,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::DiameterPx => "diameter_px",
            Self::DiameterPhys => "diameter_phys",
            Self::AreaPx => "area_px",
            Self::PerimeterPx => "perimeter_px",
            Self::Sphericity => "sphericity",
            Self::AspectRatio => "aspect_ratio",
            Self::Smoothness => "smoothness",
        }
    }

    /// Unit symbol, empty for ratios.
    pub fn unit(self) -> &'static str {
        match self {
            Self::DiameterPx | Self::PerimeterPx => "px",
            Self::DiameterPhys => "nm",
            Self::AreaPx => "px²",
            Self::Sphericity | Self::AspectRatio | Self::Smoothness => "",
        }
    }

    pub fn values(self, metrics: &[InstanceMetrics]) -> Result<Vec<f64>, MetrologyError> {
        metrics.iter().map(|m| self.of(m).ok_or(MetrologyError::Uncalibrated)).collect()
    }
}

impl std::str::FromStr for Quantity {
    type Err = UnknownQuantity;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|q| q.name() == s).ok_or_else(|| UnknownQuantity(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown metric {0:?}")]
pub struct UnknownQuantity(pub String);

pub fn summarize_quantity(metrics: &[InstanceMetrics], q: Quantity, w: Weighting) -> Result<StatsSummary, MetrologyError> {
    let values = q.values(metrics)?;
    let weights: Vec<f64> = metrics.iter().map(|m| w.weight(m)).collect();
    summarize(&values, Some(&weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiameterPercentiles {
    pub d10: f64,
    pub d50: f64,
    pub d90: f64,
}

/// D10/D50/D90 of `diameter` (pixel or physical) under a weighting.
pub fn diameter_percentiles(metrics: &[InstanceMetrics], w: Weighting, physical: bool) -> Result<DiameterPercentiles, MetrologyError> {
    let s = summarize_quantity(metrics, if physical { Quantity::DiameterPhys } else { Quantity::DiameterPx }, w)?;
    Ok(DiameterPercentiles { d10: s.p10, d50: s.p50, d90: s.p90 })
}

pub const CSV_HEADER: &str =
    "id,area_px,perimeter_px,diameter_px,diameter_phys,sphericity,aspect_ratio,smoothness,centroid_x,centroid_y,touches_edge";

/// One row per instance; `diameter_phys` (nm) is empty when uncalibrated.
pub fn write_csv<W: Write>(metrics: &[InstanceMetrics], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for m in metrics {
        let phys = m.diameter_phys.map(|d| d.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            m.id,
            m.area_px,
            m.perimeter_px,
            m.diameter_px,
            phys,
            m.sphericity,
            m.aspect_ratio,
            m.smoothness,
            m.centroid_x,
            m.centroid_y,
            m.touches_edge
        )?;
    }
    Ok(())
}
