use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::metrology::{histogram, percentile, Binning, HistogramBin, InstanceMetrics, Quantity, Weighting};

/// Whisker reach in interquartile ranges.
pub const WHISKER_IQR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub quantity: Quantity,
    pub label: String,
    pub unit: String,
}

impl Axis {
    pub fn of(q: Quantity) -> Self {
        Self { quantity: q, label: q.name().replace('_', " "), unit: q.unit().to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramChart {
    pub title: String,
    pub axis: Axis,
    pub weighting: Weighting,
    pub binning: Binning,
    pub total_weight: f64,
    pub bins: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterChart {
    pub title: String,
    pub x: Axis,
    pub y: Axis,
    pub ids: Vec<u32>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxGroup {
    pub name: String,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme samples inside the fences.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxChart {
    pub title: String,
    pub axis: Axis,
    pub whisker_iqr: f64,
    pub groups: Vec<BoxGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartData {
    Histogram(HistogramChart),
    Scatter(ScatterChart),
    Box(BoxChart),
}

impl ChartData {
    pub fn title(&self) -> &str {
        match self {
            Self::Histogram(c) => &c.title,
            Self::Scatter(c) => &c.title,
            Self::Box(c) => &c.title,
        }
    }

    /// Series lengths agree with the chart kind.
    pub fn is_consistent(&self) -> bool {
        match self {
            Self::Histogram(c) => c.bins.windows(2).all(|w| w[0].hi == w[1].lo),
            Self::Scatter(c) => c.ids.len() == c.xs.len() && c.xs.len() == c.ys.len(),
            Self::Box(c) => c.groups.iter().all(|g| g.count > 0 && g.min <= g.q1 && g.q1 <= g.median && g.median <= g.q3 && g.q3 <= g.max),
        }
    }
}

/// Weighted histogram of one quantity; no instances gives no bins.
pub fn build_histogram(
    metrics: &[InstanceMetrics],
    q: Quantity,
    weighting: Weighting,
    binning: Binning,
    title: &str,
) -> Result<ChartData, ReportError> {
    let values = q.values(metrics)?;
    let weights: Vec<f64> = metrics.iter().map(|m| weighting.weight(m)).collect();
    let bins = if values.is_empty() { Vec::new() } else { histogram(&values, Some(&weights), binning)? };
    Ok(ChartData::Histogram(HistogramChart {
        title: title.to_string(),
        axis: Axis::of(q),
        weighting,
        binning,
        total_weight: weights.iter().sum(),
        bins,
    }))
}

/// One point per instance in id order; metric names as in [`Quantity`].
pub fn build_scatter(metrics: &[InstanceMetrics], x: &str, y: &str) -> Result<ChartData, ReportError> {
    let (qx, qy): (Quantity, Quantity) = (x.parse()?, y.parse()?);
    let mut rows: Vec<&InstanceMetrics> = metrics.iter().collect();
    rows.sort_by_key(|m| m.id);
    let owned: Vec<InstanceMetrics> = rows.into_iter().cloned().collect();
    Ok(ChartData::Scatter(ScatterChart {
        title: format!("{} vs {}", qy.name().replace('_', " "), qx.name().replace('_', " ")),
        x: Axis::of(qx),
        y: Axis::of(qy),
        ids: owned.iter().map(|m| m.id).collect(),
        xs: qx.values(&owned)?,
        ys: qy.values(&owned)?,
    }))
}

pub fn box_group(name: &str, values: &[f64]) -> Result<BoxGroup, ReportError> {
    let q = |p| percentile(values, None, p);
    let (q1, median, q3) = (q(25.0)?, q(50.0)?, q(75.0)?);
    let (min, max) = (q(0.0)?, q(100.0)?);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - WHISKER_IQR * iqr, q3 + WHISKER_IQR * iqr);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let inside: Vec<f64> = sorted.iter().copied().filter(|&v| v >= lo && v <= hi).collect();
    Ok(BoxGroup {
        name: name.to_string(),
        count: values.len(),
        min,
        q1,
        median,
        q3,
        max,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: sorted.into_iter().filter(|&v| v < lo || v > hi).collect(),
    })
}

/// Box per named sample, in input order.
pub fn build_box(samples: &[(String, Vec<f64>)], axis: Axis, title: &str) -> Result<ChartData, ReportError> {
    if samples.is_empty() {
        return Err(ReportError::NoSamples);
    }
    let groups = samples.iter().map(|(n, v)| box_group(n, v)).collect::<Result<_, _>>()?;
    Ok(ChartData::Box(BoxChart { title: title.to_string(), axis, whisker_iqr: WHISKER_IQR, groups }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u32, d: f64, s: f64) -> InstanceMetrics {
        InstanceMetrics {
            id,
            area_px: d * d,
            perimeter_px: 4.0 * d,
            diameter_px: d,
            sphericity: s,
            aspect_ratio: 1.0,
            smoothness: 1.0,
            centroid_x: 0.0,
            centroid_y: 0.0,
            touches_edge: false,
            diameter_phys: None,
        }
    }

    /// Quartile by walking the sorted samples with a cumulative counter.
    fn scan_quantile(values: &[f64], q: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let target = q * (v.len() - 1) as f64;
        let mut k = 0;
        while (k + 1) as f64 <= target && k + 1 < v.len() {
            k += 1;
        }
        let frac = target - k as f64;
        if k + 1 < v.len() {
            v[k] + frac * (v[k + 1] - v[k])
        } else {
            v[k]
        }
    }

    #[test]
    fn box_of_one_to_five() {
        let v = [4.0, 1.0, 5.0, 3.0, 2.0];
        let g = box_group("s", &v).unwrap();
        assert_eq!((g.q1, g.median, g.q3), (2.0, 3.0, 4.0));
        for (q, got) in [(0.25, g.q1), (0.5, g.median), (0.75, g.q3)] {
            assert_eq!(scan_quantile(&v, q), got);
        }
        assert!(g.outliers.is_empty());
        assert_eq!((g.whisker_low, g.whisker_high), (1.0, 5.0));
    }

    #[test]
    fn box_degenerate_and_outliers() {
        let g = box_group("one", &[7.0]).unwrap();
        assert_eq!((g.min, g.q1, g.median, g.q3, g.max), (7.0, 7.0, 7.0, 7.0, 7.0));
        assert!(g.outliers.is_empty());
        let g = box_group("o", &[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(g.outliers, vec![100.0]);
        assert_eq!(g.whisker_high, 4.0);
        let c = build_box(&[("b".into(), vec![1.0]), ("a".into(), vec![2.0, 3.0])], Axis::of(Quantity::DiameterPx), "t").unwrap();
        let ChartData::Box(b) = &c else { panic!() };
        assert_eq!(b.groups.iter().map(|g| g.name.as_str()).collect::<Vec<_>>(), vec!["b", "a"]);
        assert!(c.is_consistent());
        assert!(matches!(build_box(&[], Axis::of(Quantity::DiameterPx), "t"), Err(ReportError::NoSamples)));
    }

    #[test]
    fn scatter_pairs() {
        let ms: Vec<_> = [(3, 5.0, 0.9), (1, 2.0, 0.8), (2, 9.0, 0.7)].iter().map(|&(i, d, s)| rec(i, d, s)).collect();
        let ChartData::Scatter(c) = build_scatter(&ms, "diameter_px", "sphericity").unwrap() else { panic!() };
        assert_eq!(c.ids, vec![1, 2, 3]);
        assert_eq!(c.xs, vec![2.0, 9.0, 5.0]);
        assert_eq!(c.ys, vec![0.8, 0.7, 0.9]);
        let ChartData::Scatter(d) = build_scatter(&ms, "area_px", "area_px").unwrap() else { panic!() };
        assert_eq!(d.xs, d.ys);
        let ChartData::Scatter(e) = build_scatter(&[], "diameter_px", "sphericity").unwrap() else { panic!() };
        assert!(e.ids.is_empty());
        assert!(matches!(build_scatter(&ms, "bogus", "sphericity"), Err(ReportError::UnknownMetric(_))));
        assert!(matches!(build_scatter(&ms, "diameter_phys", "sphericity"), Err(ReportError::Metrology(_))));
    }

    #[test]
    fn histogram_chart() {
        let ms: Vec<_> = (1..=10).map(|i| rec(i, i as f64, 1.0)).collect();
        let c = build_histogram(&ms, Quantity::DiameterPx, Weighting::Area, Binning::Width(2.5), "d").unwrap();
        let ChartData::Histogram(h) = &c else { panic!() };
        assert_eq!(h.total_weight, 385.0);
        assert_eq!(h.bins.iter().map(|b| b.weight).sum::<f64>(), 385.0);
        assert!(c.is_consistent());
        let empty = build_histogram(&[], Quantity::DiameterPx, Weighting::Count, Binning::Count(5), "d").unwrap();
        let ChartData::Histogram(h) = empty else { panic!() };
        assert!(h.bins.is_empty());
    }
}
