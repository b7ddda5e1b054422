use serde::{Deserialize, Serialize};

use super::MetrologyError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

fn check(values: &[f64], weights: Option<&[f64]>) -> Result<(), MetrologyError> {
    if values.is_empty() {
        return Err(MetrologyError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetrologyError::NonFinite);
    }
    if let Some(w) = weights {
        if w.len() != values.len() {
            return Err(MetrologyError::LengthMismatch);
        }
        if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(MetrologyError::NonPositiveWeight);
        }
    }
    Ok(())
}

/// Samples sorted by value with the position of each on the [0, 1]
/// percentile axis.
///
/// Sample k sits at `(C_k - w_k/2 - w_0/2) / (W - (w_0 + w_last)/2)`, where
/// `C_k` is the cumulative weight through k: the midpoint of its weight
/// span, rescaled so the extremes land on 0 and 1. With unit weights this
/// is `k / (n - 1)`.
struct Cdf {
    values: Vec<f64>,
    anchors: Vec<f64>,
}

impl Cdf {
    fn new(values: &[f64], weights: Option<&[f64]>) -> Self {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let w = |i: usize| weights.map_or(1.0, |w| w[i]);
        let total: f64 = idx.iter().map(|&i| w(i)).sum();
        let (w0, wl) = (w(idx[0]), w(idx[idx.len() - 1]));
        let denom = total - (w0 + wl) / 2.0;
        let mut cum = 0.0;
        let mut anchors = Vec::with_capacity(idx.len());
        for &i in &idx {
            cum += w(i);
            anchors.push(if idx.len() == 1 { 0.0 } else { ((cum - w(i) / 2.0 - w0 / 2.0) / denom).clamp(0.0, 1.0) });
        }
        Self { values: idx.iter().map(|&i| values[i]).collect(), anchors }
    }

    /// Value at percentile axis position `q` in [0, 1].
    fn at(&self, q: f64) -> f64 {
        let n = self.values.len();
        if n == 1 || q <= 0.0 {
            return self.values[0];
        }
        if q >= 1.0 {
            return self.values[n - 1];
        }
        // first anchor strictly above q
        let k = self.anchors.partition_point(|&a| a <= q).clamp(1, n - 1);
        let (a0, a1) = (self.anchors[k - 1], self.anchors[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        if a1 <= a0 {
            return v1;
        }
        v0 + (v1 - v0) * (q - a0) / (a1 - a0)
    }
}

/// Weighted summary; `None` weights means every weight is 1. The standard
/// deviation is the population one.
pub fn summarize(values: &[f64], weights: Option<&[f64]>) -> Result<StatsSummary, MetrologyError> {
    check(values, weights)?;
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..values.len()).map(w).sum();
    let mean = (0..values.len()).map(|i| w(i) * values[i]).sum::<f64>() / total;
    let var = (0..values.len()).map(|i| w(i) * (values[i] - mean).powi(2)).sum::<f64>() / total;
    let cdf = Cdf::new(values, weights);
    let (min, max) = (cdf.values[0], cdf.values[values.len() - 1]);
    Ok(StatsSummary {
        count: values.len(),
        min,
        max,
        mean: mean.clamp(min, max),
        std: var.sqrt(),
        p10: cdf.at(0.1),
        p50: cdf.at(0.5),
        p90: cdf.at(0.9),
    })
}

/// Weighted percentile, `q` in [0, 100].
pub fn percentile(values: &[f64], weights: Option<&[f64]>, q: f64) -> Result<f64, MetrologyError> {
    check(values, weights)?;
    Ok(Cdf::new(values, weights).at(q / 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    Width(f64),
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

/// Bins `[lo, hi)` from the minimum to the maximum, the last one closed.
/// Bin weights sum to the total weight.
pub fn histogram(values: &[f64], weights: Option<&[f64]>, binning: Binning) -> Result<Vec<HistogramBin>, MetrologyError> {
    check(values, weights)?;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let (n, width) = match binning {
        Binning::Width(bw) if bw > 0.0 && bw.is_finite() => (((range / bw).ceil() as usize).max(1), bw),
        Binning::Count(c) if c >= 1 => (c, range / c as f64),
        _ => return Err(MetrologyError::InvalidBinning),
    };
    if range == 0.0 {
        let weight = (0..values.len()).map(|i| weights.map_or(1.0, |w| w[i])).sum();
        return Ok(vec![HistogramBin { lo: min, hi: max, weight }]);
    }
    let mut edges: Vec<f64> = (0..n).map(|i| min + i as f64 * width).collect();
    edges.push(max);
    let mut bins: Vec<HistogramBin> = edges.windows(2).map(|e| HistogramBin { lo: e[0], hi: e[1], weight: 0.0 }).collect();
    for (i, &v) in values.iter().enumerate() {
        let mut k = (((v - min) / width) as usize).min(n - 1);
        // repair float drift at the edges
        while k > 0 && v < edges[k] {
            k -= 1;
        }
        while k + 1 < n && v >= edges[k + 1] {
            k += 1;
        }
        bins[k].weight += weights.map_or(1.0, |w| w[i]);
    }
    Ok(bins)
}
