//! Chart data and self-contained analysis reports.
//!
//! A [`ReportDocument`] holds every number a report shows. [`render_report`]
//! turns it into standalone HTML with inline SVG and a JSON twin that
//! deserializes back to the same document.

mod charts;
mod render;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrology::{
    diameter_percentiles, filter_instances, summarize_quantity, Binning, DiameterPercentiles, FilterCriteria, InstanceMetrics,
    MetrologyError, Quantity, StatsSummary, UnknownQuantity, Weighting,
};
use crate::scalebar::ScaleCalibration;

pub use charts::{box_group, build_box, build_histogram, build_scatter, Axis, BoxChart, BoxGroup, ChartData, HistogramChart, ScatterChart, WHISKER_IQR};
pub use render::{render_report, RenderedReport};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error(transparent)]
    UnknownMetric(#[from] UnknownQuantity),
    #[error(transparent)]
    Metrology(#[from] MetrologyError),
    #[error("at least one sample is required")]
    NoSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityStats {
    pub quantity: Quantity,
    /// Absent when no instance survives the filter.
    pub summary: Option<StatsSummary>,
}

/// Statistics of one sample after its filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub name: String,
    pub total_instances: usize,
    pub instance_count: usize,
    pub filter: FilterCriteria,
    pub weighting: Weighting,
    pub calibration: Option<ScaleCalibration>,
    pub stats: Vec<QuantityStats>,
    pub d_values_px: Option<DiameterPercentiles>,
    /// Nanometres.
    pub d_values_phys: Option<DiameterPercentiles>,
}

/// Per-quantity summaries over `metrics`. The physical diameter is only
/// listed when every record has it.
pub fn stats_block(metrics: &[InstanceMetrics], w: Weighting) -> Result<Vec<QuantityStats>, ReportError> {
    let calibrated = !metrics.is_empty() && metrics.iter().all(|m| m.diameter_phys.is_some());
    let mut out = Vec::new();
    for q in Quantity::ALL {
        if q == Quantity::DiameterPhys && !calibrated {
            continue;
        }
        let summary = if metrics.is_empty() { None } else { Some(summarize_quantity(metrics, q, w)?) };
        out.push(QuantityStats { quantity: q, summary });
    }
    Ok(out)
}

/// Applies `filter` to `metrics` and summarizes the survivors.
pub fn sample_summary(
    name: &str,
    metrics: &[InstanceMetrics],
    filter: &FilterCriteria,
    calibration: Option<&ScaleCalibration>,
    w: Weighting,
) -> Result<(SampleSummary, Vec<InstanceMetrics>), ReportError> {
    let kept = filter_instances(metrics, filter)?;
    let calibrated = calibration.is_some() && !kept.is_empty();
    let summary = SampleSummary {
        name: name.to_string(),
        total_instances: metrics.len(),
        instance_count: kept.len(),
        filter: filter.clone(),
        weighting: w,
        calibration: calibration.copied(),
        stats: stats_block(&kept, w)?,
        d_values_px: if kept.is_empty() { None } else { Some(diameter_percentiles(&kept, w, false)?) },
        d_values_phys: if calibrated { Some(diameter_percentiles(&kept, w, true)?) } else { None },
    };
    Ok((summary, kept))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(name: &str, bytes: &[u8]) -> Self {
        Self { name: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub software: String,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_version: Option<u64>,
}

impl Provenance {
    pub fn new(inputs: Vec<InputDigest>, params: serde_json::Value, task_version: Option<u64>) -> Self {
        Self { software: "granula".to_string(), version: env!("CARGO_PKG_VERSION").to_string(), inputs, params, task_version }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub title: String,
    pub samples: Vec<SampleSummary>,
    pub charts: Vec<ChartData>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportOptions {
    pub title: String,
    pub weighting: Weighting,
    pub binning: Binning,
    pub scatter_x: Quantity,
    pub scatter_y: Quantity,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            title: "Particle analysis".to_string(),
            weighting: Weighting::Count,
            binning: Binning::Count(20),
            scatter_x: Quantity::DiameterPx,
            scatter_y: Quantity::Sphericity,
        }
    }
}

pub struct SampleInput<'a> {
    pub name: &'a str,
    pub metrics: &'a [InstanceMetrics],
    pub calibration: Option<&'a ScaleCalibration>,
    pub filter: &'a FilterCriteria,
}

/// Statistics and charts for one or more samples. Each sample gets a
/// diameter histogram and a scatter plot; two or more samples add box
/// comparisons of diameter, sphericity and aspect ratio. Diameters are
/// physical when every sample is calibrated.
pub fn build_report(samples: &[SampleInput], opts: &ReportOptions, provenance: Provenance) -> Result<ReportDocument, ReportError> {
    if samples.is_empty() {
        return Err(ReportError::NoSamples);
    }
    let physical = samples.iter().all(|s| s.calibration.is_some());
    let diameter = if physical { Quantity::DiameterPhys } else { Quantity::DiameterPx };
    let mut summaries = Vec::new();
    let mut kept_all = Vec::new();
    for s in samples {
        let (summary, kept) = sample_summary(s.name, s.metrics, s.filter, s.calibration, opts.weighting)?;
        summaries.push(summary);
        kept_all.push(kept);
    }
    let mut charts = Vec::new();
    for (s, kept) in samples.iter().zip(&kept_all) {
        let title = format!("{}: {} distribution", s.name, diameter.name().replace('_', " "));
        charts.push(build_histogram(kept, diameter, opts.weighting, opts.binning, &title)?);
    }
    for (s, kept) in samples.iter().zip(&kept_all) {
        let sx = if opts.scatter_x == Quantity::DiameterPx { diameter } else { opts.scatter_x };
        if let ChartData::Scatter(mut c) = build_scatter(kept, sx.name(), opts.scatter_y.name())? {
            c.title = format!("{}: {}", s.name, c.title);
            charts.push(ChartData::Scatter(c));
        }
    }
    if samples.len() >= 2 {
        for q in [diameter, Quantity::Sphericity, Quantity::AspectRatio] {
            let groups: Vec<(String, Vec<f64>)> = samples
                .iter()
                .zip(&kept_all)
                .filter(|(_, k)| !k.is_empty())
                .map(|(s, k)| Ok((s.name.to_string(), q.values(k)?)))
                .collect::<Result<_, MetrologyError>>()?;
            if !groups.is_empty() {
                charts.push(build_box(&groups, Axis::of(q), &format!("Comparison of {}", q.name().replace('_', " ")))?);
            }
        }
    }
    Ok(ReportDocument { schema_version: REPORT_SCHEMA_VERSION, title: opts.title.clone(), samples: summaries, charts, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrology::measure_all;
    use crate::scalebar::{calibrate_length, LengthUnit};
    use crate::synthgen::{gen_scene, SceneSpec, Shape};

    fn sample(mu: f64, seed: u64) -> Vec<InstanceMetrics> {
        let (_, t) = gen_scene(&SceneSpec::new(256, 256, 40, Shape::Ellipse, mu, 0.25, seed)).unwrap();
        let c = calibrate_length(100, 1.0, LengthUnit::Micrometer).unwrap();
        measure_all(&t.label_map, Some(&c))
    }

    #[test]
    fn two_sample_comparison_has_all_charts() {
        let (a, b) = (sample(2.3, 1), sample(2.9, 2));
        let c = calibrate_length(100, 1.0, LengthUnit::Micrometer).unwrap();
        let f = FilterCriteria::default();
        let inputs = [
            SampleInput { name: "small", metrics: &a, calibration: Some(&c), filter: &f },
            SampleInput { name: "large", metrics: &b, calibration: Some(&c), filter: &f },
        ];
        let doc = build_report(&inputs, &ReportOptions::default(), Provenance::new(vec![], serde_json::json!({}), None)).unwrap();
        let titles: Vec<&str> = doc.charts.iter().map(|c| c.title()).collect();
        assert!(titles.contains(&"Comparison of sphericity"));
        assert!(titles.contains(&"Comparison of aspect ratio"));
        assert!(titles.contains(&"Comparison of diameter phys"));
        assert_eq!(doc.charts.iter().filter(|c| matches!(c, ChartData::Histogram(_))).count(), 2);
        assert!(doc.charts.iter().all(ChartData::is_consistent));
        let (da, db) = (doc.samples[0].d_values_phys.unwrap(), doc.samples[1].d_values_phys.unwrap());
        assert!(da.d50 < db.d50);
    }

    #[test]
    fn empty_filter_result_is_marked() {
        let a = sample(2.5, 3);
        let f = FilterCriteria { diameter_min: Some(1e9), ..Default::default() };
        let (s, kept) = sample_summary("x", &a, &f, None, Weighting::Count).unwrap();
        assert!(kept.is_empty());
        assert_eq!(s.instance_count, 0);
        assert!(s.stats.iter().all(|q| q.summary.is_none()));
        assert!(s.d_values_px.is_none());
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(InputDigest::of("e", b"").sha256, "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
