//! One image from pixels to statistics: segmentation from a flow field or a
//! ready label map, scale-bar calibration, per-instance metrics and the
//! filtered sample summary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{segment, DynamicsError, DynamicsParams};
use crate::flowgen::{FlowGenError, FlowGenParams};
use crate::imagecore::{canonicalize_labels, FlowField, LabelMap, Raster8};
use crate::metrology::{measure_all, FilterCriteria, InstanceMetrics, MetrologyError};
use crate::report::{sample_summary, ReportError, ReportOptions, SampleSummary};
use crate::scalebar::{recognize, ExternalDetection, ScaleBarParams, ScaleCalibration, ScaleOutput, TextDetection};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dynamics: DynamicsParams,
    pub flowgen: FlowGenParams,
    pub scalebar: ScaleBarParams,
    /// Default filter applied to every sample.
    pub filter: FilterCriteria,
    pub report: ReportOptions,
    /// Worker threads; unset means the runtime default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.dynamics.validate()?;
        self.flowgen.validate()?;
        self.filter.validate()?;
        if self.threads == Some(0) {
            return Err(PipelineError::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no segmentation source")]
    NoSegmentationSource,
    #[error("dimension mismatch: image is {image:?}, segmentation input is {input:?}")]
    DimensionMismatch { image: (usize, usize), input: (usize, usize) },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    FlowGen(#[from] FlowGenError),
    #[error(transparent)]
    Metrology(#[from] MetrologyError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentationSource {
    Flow(FlowField),
    /// Ground-truth or externally produced labels.
    Labels(LabelMap),
}

impl SegmentationSource {
    fn dims(&self) -> (usize, usize) {
        match self {
            Self::Flow(f) => (f.width, f.height),
            Self::Labels(l) => (l.width(), l.height()),
        }
    }
}

/// Turns the segmentation input into a canonical label map sized like the image.
pub fn segment_input(width: usize, height: usize, source: Option<&SegmentationSource>, params: &DynamicsParams) -> Result<LabelMap, PipelineError> {
    let source = source.ok_or(PipelineError::NoSegmentationSource)?;
    if source.dims() != (width, height) {
        return Err(PipelineError::DimensionMismatch { image: (width, height), input: source.dims() });
    }
    Ok(match source {
        SegmentationSource::Flow(f) => segment(f, params)?,
        SegmentationSource::Labels(l) => canonicalize_labels(l),
    })
}

/// Scale reading, or the reason there is none. Failure is not fatal: the
/// sample is then measured in pixels only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleStatus {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reading: Option<ScaleOutput>,
    pub calibration: Option<ScaleCalibration>,
    /// Label matched to the bar.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<TextDetection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn read_scale(image: &Raster8, detections: &[ExternalDetection], params: &ScaleBarParams) -> ScaleStatus {
    match recognize(image, detections, params) {
        Ok(r) => {
            let error = r.calibration.is_none().then(|| "scale bar found but no label matched".to_string());
            ScaleStatus { reading: Some(r.output()), calibration: r.calibration, text: r.text, error }
        }
        Err(e) => ScaleStatus { reading: None, calibration: None, text: None, error: Some(e.to_string()) },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub scale: ScaleStatus,
    /// Every instance, before filtering, in id order.
    pub instances: Vec<InstanceMetrics>,
    pub summary: SampleSummary,
    #[serde(skip)]
    pub labels: LabelMap,
}

impl Analysis {
    pub fn calibration(&self) -> Option<&ScaleCalibration> {
        self.scale.calibration.as_ref()
    }
}

/// Metrics and the filtered summary for a label map.
pub fn summarize_labels(
    name: &str,
    labels: &LabelMap,
    calibration: Option<&ScaleCalibration>,
    filter: &FilterCriteria,
    opts: &ReportOptions,
) -> Result<(Vec<InstanceMetrics>, SampleSummary), PipelineError> {
    let instances = measure_all(labels, calibration);
    let (summary, _) = sample_summary(name, &instances, filter, calibration, opts.weighting)?;
    Ok((instances, summary))
}

/// Full analysis of one image. A `calibration` argument overrides the
/// scale-bar reading.
pub fn analyze(
    name: &str,
    image: &Raster8,
    source: Option<&SegmentationSource>,
    detections: &[ExternalDetection],
    calibration: Option<ScaleCalibration>,
    cfg: &PipelineConfig,
) -> Result<Analysis, PipelineError> {
    cfg.validate()?;
    let labels = segment_input(image.width(), image.height(), source, &cfg.dynamics)?;
    let scale = match calibration {
        Some(c) => ScaleStatus { reading: None, calibration: Some(c), text: None, error: None },
        None => read_scale(image, detections, &cfg.scalebar),
    };
    let (instances, summary) = summarize_labels(name, &labels, scale.calibration.as_ref(), &cfg.filter, &cfg.report)?;
    Ok(Analysis { name: name.to_string(), width: image.width(), height: image.height(), scale, instances, summary, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowgen::labels_to_flows;
    use crate::scalebar::LengthUnit;
    use crate::synthgen::{gen_micrograph, MicrographSpec, SceneSpec, Shape};

    fn micrograph() -> crate::synthgen::Micrograph {
        let scene = SceneSpec::new(0, 0, 40, Shape::Disk, 3.2, 0.2, 5);
        gen_micrograph(&MicrographSpec::square(320, scene, 200, 5, LengthUnit::Micrometer)).unwrap()
    }

    #[test]
    fn flow_and_labels_agree() {
        let m = micrograph();
        let cfg = PipelineConfig::default();
        let flow = labels_to_flows(&m.truth.label_map, &cfg.flowgen).unwrap();
        let a = analyze("a", &m.image, Some(&SegmentationSource::Flow(flow)), &m.detections, None, &cfg).unwrap();
        let b = analyze("b", &m.image, Some(&SegmentationSource::Labels(m.truth.label_map.clone())), &m.detections, None, &cfg).unwrap();
        assert_eq!(a.scale.calibration.unwrap().nm_per_pixel, 25.0);
        assert_eq!(a.instances.len(), b.instances.len());
        assert_eq!(a.labels, b.labels);
        assert!(a.instances.iter().all(|i| i.diameter_phys.is_some()));
    }

    #[test]
    fn contract_errors() {
        let m = micrograph();
        let cfg = PipelineConfig::default();
        let e = analyze("x", &m.image, None, &[], None, &cfg).unwrap_err();
        assert_eq!(e.to_string(), "no segmentation source");
        let small = SegmentationSource::Labels(LabelMap::new(10, 10));
        let e = analyze("x", &m.image, Some(&small), &[], None, &cfg).unwrap_err();
        assert!(e.to_string().starts_with("dimension mismatch"));
    }

    #[test]
    fn missing_label_is_not_fatal() {
        let m = micrograph();
        let a = analyze("x", &m.image, Some(&SegmentationSource::Labels(m.truth.label_map.clone())), &[], None, &PipelineConfig::default()).unwrap();
        assert!(a.scale.calibration.is_none());
        assert!(a.scale.error.is_some());
        assert!(a.instances.iter().all(|i| i.diameter_phys.is_none()));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"dynamics":{"step":2}}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"colour":1}"#).is_err());
        let c: PipelineConfig = serde_json::from_str(r#"{"threads":3,"filter":{"exclude_edge":true}}"#).unwrap();
        assert_eq!(c.threads, Some(3));
        assert!(PipelineConfig { threads: Some(0), ..Default::default() }.validate().is_err());
    }
}
