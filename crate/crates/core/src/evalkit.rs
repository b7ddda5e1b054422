//! Segmentation and scale-bar scoring.
//!
//! AP here is the bioimage convention `TP / (TP + FP + FN)` at a single
//! IoU threshold, not the COCO area under a precision-recall curve.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{LabelMap, Raster8};
use crate::metrology::percentile;
use crate::scalebar::{recognize, DetectionKind, ExternalDetection, ScaleBarParams};
use crate::synthgen::ScaleBarTruth;

/// Images with at least this many ground-truth instances are dense.
pub const DENSE_MIN_INSTANCES: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("prediction is {pred:?} but ground truth is {gt:?}")]
    DimensionMismatch { pred: (usize, usize), gt: (usize, usize) },
    #[error("IoU threshold {0} outside the allowed range")]
    InvalidThreshold(f64),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("truth length must be positive")]
    ZeroTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouPair {
    pub pred: u32,
    pub gt: u32,
    pub iou: f64,
}

/// Every overlapping (pred, gt) pair plus the full id sets, so instances
/// without any overlap still count as FP or FN.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Overlaps {
    pub pairs: Vec<IouPair>,
    pub pred_ids: Vec<u32>,
    pub gt_ids: Vec<u32>,
}

/// Pairs with nonzero overlap from one joint pass over both maps, sorted
/// by (pred, gt).
pub fn iou_pairs(pred: &LabelMap, gt: &LabelMap) -> Result<Overlaps, EvalError> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(EvalError::DimensionMismatch { pred: (pred.width(), pred.height()), gt: (gt.width(), gt.height()) });
    }
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let mut pa: HashMap<u32, u64> = HashMap::new();
    let mut ga: HashMap<u32, u64> = HashMap::new();
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if p != 0 {
            *pa.entry(p).or_default() += 1;
        }
        if g != 0 {
            *ga.entry(g).or_default() += 1;
        }
        if p != 0 && g != 0 {
            *joint.entry((p, g)).or_default() += 1;
        }
    }
    let mut pairs: Vec<IouPair> = joint
        .into_iter()
        .map(|((p, g), inter)| IouPair { pred: p, gt: g, iou: inter as f64 / (pa[&p] + ga[&g] - inter) as f64 })
        .collect();
    pairs.sort_by_key(|x| (x.pred, x.gt));
    let mut pred_ids: Vec<u32> = pa.into_keys().collect();
    let mut gt_ids: Vec<u32> = ga.into_keys().collect();
    pred_ids.sort_unstable();
    gt_ids.sort_unstable();
    Ok(Overlaps { pairs, pred_ids, gt_ids })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<IouPair>,
    pub unmatched_pred: Vec<u32>,
    pub unmatched_gt: Vec<u32>,
    pub threshold: f64,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.unmatched_pred.len()
    }

    pub fn fn_(&self) -> usize {
        self.unmatched_gt.len()
    }
}

fn check_threshold(t: f64, lo: f64) -> Result<(), EvalError> {
    if t.is_finite() && t >= lo && t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidThreshold(t))
    }
}

/// Greedy one-to-one matching over pairs with IoU strictly above `t`,
/// highest IoU first, ties by (pred, gt). From 0.5 up the result does not
/// depend on the order, since each instance has at most one such partner.
pub fn match_at_threshold(ov: &Overlaps, t: f64) -> Result<MatchResult, EvalError> {
    check_threshold(t, 0.0)?;
    let mut cand: Vec<IouPair> = ov.pairs.iter().copied().filter(|p| p.iou > t).collect();
    cand.sort_by(|a, b| b.iou.total_cmp(&a.iou).then((a.pred, a.gt).cmp(&(b.pred, b.gt))));
    let (mut used_p, mut used_g) = (BTreeSet::new(), BTreeSet::new());
    let mut pairs = Vec::new();
    for c in cand {
        if !used_p.contains(&c.pred) && !used_g.contains(&c.gt) {
            used_p.insert(c.pred);
            used_g.insert(c.gt);
            pairs.push(c);
        }
    }
    Ok(MatchResult {
        pairs,
        unmatched_pred: ov.pred_ids.iter().copied().filter(|i| !used_p.contains(i)).collect(),
        unmatched_gt: ov.gt_ids.iter().copied().filter(|i| !used_g.contains(i)).collect(),
        threshold: t,
    })
}

fn ap_of(m: &MatchResult) -> f64 {
    let denom = m.tp() + m.fp() + m.fn_();
    if denom == 0 {
        1.0
    } else {
        m.tp() as f64 / denom as f64
    }
}

fn pq_of(m: &MatchResult) -> f64 {
    let denom = m.tp() as f64 + 0.5 * m.fp() as f64 + 0.5 * m.fn_() as f64;
    if denom == 0.0 {
        1.0
    } else {
        m.pairs.iter().map(|p| p.iou).sum::<f64>() / denom
    }
}

pub fn average_precision(pred: &LabelMap, gt: &LabelMap, t: f64) -> Result<f64, EvalError> {
    Ok(ap_of(&match_at_threshold(&iou_pairs(pred, gt)?, t)?))
}

/// Single-class panoptic quality; `t` must be at least 0.5.
pub fn panoptic_quality(pred: &LabelMap, gt: &LabelMap, t: f64) -> Result<f64, EvalError> {
    check_threshold(t, 0.5)?;
    Ok(pq_of(&match_at_threshold(&iou_pairs(pred, gt)?, t)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Sparse,
    Dense,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub name: String,
    pub ap: f64,
    /// Present when the threshold allows PQ.
    pub pq: Option<f64>,
    pub instance_count: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub subset: Subset,
    pub threshold: f64,
    /// Label for `mean_ap`, which is not the COCO metric.
    pub ap_definition: String,
    pub per_image: Vec<ImageScore>,
    pub mean_ap: f64,
    pub mean_pq: Option<f64>,
}

pub const AP_DEFINITION: &str = "AP (TP/(TP+FP+FN))";

pub fn score_image(name: &str, pred: &LabelMap, gt: &LabelMap, t: f64) -> Result<ImageScore, EvalError> {
    let ov = iou_pairs(pred, gt)?;
    let m = match_at_threshold(&ov, t)?;
    Ok(ImageScore {
        name: name.to_string(),
        ap: ap_of(&m),
        pq: (t >= 0.5).then(|| pq_of(&m)),
        instance_count: ov.gt_ids.len(),
        tp: m.tp(),
        fp: m.fp(),
        fn_: m.fn_(),
    })
}

/// Aggregates already scored images; means are unweighted.
pub fn report_from_scores(per_image: Vec<ImageScore>, t: f64, subset: Subset) -> Result<EvalReport, EvalError> {
    if per_image.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let n = per_image.len() as f64;
    let mean_ap = per_image.iter().map(|s| s.ap).sum::<f64>() / n;
    let mean_pq = per_image.iter().map(|s| s.pq).sum::<Option<f64>>().map(|s| s / n);
    Ok(EvalReport { subset, threshold: t, ap_definition: AP_DEFINITION.to_string(), per_image, mean_ap, mean_pq })
}

/// Scores `(name, pred, gt)` triples in parallel, keeping input order.
pub fn evaluate(dataset: &[(String, LabelMap, LabelMap)], t: f64) -> Result<EvalReport, EvalError> {
    check_threshold(t, 0.0)?;
    let scores = dataset
        .par_iter()
        .map(|(name, p, g)| score_image(name, p, g, t))
        .collect::<Result<Vec<_>, _>>()?;
    report_from_scores(scores, t, Subset::All)
}

pub fn mean_ap(dataset: &[(LabelMap, LabelMap)], t: f64) -> Result<f64, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let aps = dataset.par_iter().map(|(p, g)| average_precision(p, g, t)).collect::<Result<Vec<_>, _>>()?;
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Splits by instance count: fewer than [`DENSE_MIN_INSTANCES`] is sparse,
/// the rest dense. Order is preserved.
pub fn split_sparse_dense<T>(items: Vec<T>, count: impl Fn(&T) -> usize) -> (Vec<T>, Vec<T>) {
    items.into_iter().partition(|x| count(x) < DENSE_MIN_INSTANCES)
}

/// All-images report with its sparse and dense parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegEvalSummary {
    pub all: EvalReport,
    pub sparse: Option<EvalReport>,
    pub dense: Option<EvalReport>,
}

pub fn summarize_by_density(all: EvalReport) -> SegEvalSummary {
    let (sparse, dense) = split_sparse_dense(all.per_image.clone(), |s| s.instance_count);
    let part = |v: Vec<ImageScore>, tag| report_from_scores(v, all.threshold, tag).ok();
    SegEvalSummary { sparse: part(sparse, Subset::Sparse), dense: part(dense, Subset::Dense), all }
}

/// One scale-bar reading against its truth. A failed reading has no
/// `recognized_px` and counts as an error of the full truth length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBarResult {
    pub recognized_px: Option<f64>,
    pub truth_px: f64,
    pub unit_ok: bool,
    pub value_ok: bool,
}

/// Reads a synthetic scale-bar image, feeding its true label text in place
/// of an OCR stage, and scores the reading against the truth.
pub fn score_scalebar(img: &Raster8, truth: &ScaleBarTruth, params: &ScaleBarParams) -> ScaleBarResult {
    let text = ExternalDetection { bbox: truth.text_bbox, kind: DetectionKind::Text, text: Some(truth.text.clone()), confidence: 0.9 };
    let truth_px = truth.pixel_length as f64;
    match recognize(img, &[text], params) {
        Ok(r) => ScaleBarResult {
            recognized_px: Some(r.endpoints.pixel_length as f64),
            truth_px,
            unit_ok: r.calibration.is_some_and(|c| c.unit == truth.unit),
            value_ok: r.calibration.is_some_and(|c| c.value == truth.value),
        },
        Err(_) => ScaleBarResult { recognized_px: None, truth_px, unit_ok: false, value_ok: false },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPercentiles {
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleBarReport {
    pub count: usize,
    pub failures: usize,
    pub unit_accuracy: f64,
    pub value_accuracy: f64,
    pub mae_px: f64,
    /// Readings with zero length error.
    pub exact_count: usize,
    pub mean_relative_error: f64,
    /// Absolute relative length error.
    pub error_percentiles: ErrorPercentiles,
    pub relative_errors: Vec<f64>,
}

pub fn scalebar_report(results: &[ScaleBarResult]) -> Result<ScaleBarReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if results.iter().any(|r| !(r.truth_px > 0.0)) {
        return Err(EvalError::ZeroTruth);
    }
    let n = results.len() as f64;
    let abs: Vec<f64> = results.iter().map(|r| r.recognized_px.map_or(r.truth_px, |x| (x - r.truth_px).abs())).collect();
    let rel: Vec<f64> = abs.iter().zip(results).map(|(e, r)| e / r.truth_px).collect();
    let pct = |q| percentile(&rel, None, q).expect("nonempty finite errors");
    Ok(ScaleBarReport {
        count: results.len(),
        failures: results.iter().filter(|r| r.recognized_px.is_none()).count(),
        unit_accuracy: results.iter().filter(|r| r.unit_ok).count() as f64 / n,
        value_accuracy: results.iter().filter(|r| r.value_ok).count() as f64 / n,
        mae_px: abs.iter().sum::<f64>() / n,
        exact_count: abs.iter().filter(|&&e| e == 0.0).count(),
        mean_relative_error: rel.iter().sum::<f64>() / n,
        error_percentiles: ErrorPercentiles { p50: pct(50.0), p75: pct(75.0), p90: pct(90.0), p95: pct(95.0) },
        relative_errors: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rects(w: usize, h: usize, boxes: &[(u32, usize, usize, usize, usize)]) -> LabelMap {
        let mut lm = LabelMap::new(w, h);
        for &(id, x0, y0, bw, bh) in boxes {
            for y in y0..(y0 + bh).min(h) {
                for x in x0..(x0 + bw).min(w) {
                    lm.set(x, y, id);
                }
            }
        }
        lm
    }

    #[test]
    fn identical_and_disjoint() {
        let a = rects(20, 20, &[(1, 0, 0, 5, 5), (2, 10, 10, 4, 6)]);
        let ov = iou_pairs(&a, &a).unwrap();
        assert_eq!(ov.pairs, vec![IouPair { pred: 1, gt: 1, iou: 1.0 }, IouPair { pred: 2, gt: 2, iou: 1.0 }]);
        let b = rects(20, 20, &[(1, 6, 0, 3, 3)]);
        assert!(iou_pairs(&a, &b).unwrap().pairs.is_empty());
        assert!(matches!(iou_pairs(&a, &LabelMap::new(3, 3)), Err(EvalError::DimensionMismatch { .. })));
    }

    #[test]
    fn half_cover_is_half() {
        let gt = rects(10, 10, &[(1, 0, 0, 10, 10)]);
        let pred = rects(10, 10, &[(1, 0, 0, 10, 5)]);
        // |∩| = 50, |∪| = 100
        assert_eq!(iou_pairs(&pred, &gt).unwrap().pairs[0].iou, 0.5);
    }

    #[test]
    fn greedy_takes_best() {
        let ov = Overlaps {
            pairs: vec![IouPair { pred: 1, gt: 1, iou: 0.6 }, IouPair { pred: 2, gt: 1, iou: 0.55 }],
            pred_ids: vec![1, 2],
            gt_ids: vec![1],
        };
        let m = match_at_threshold(&ov, 0.5).unwrap();
        assert_eq!(m.pairs, vec![ov.pairs[0]]);
        assert_eq!((m.unmatched_pred.clone(), m.unmatched_gt.clone()), (vec![2], vec![]));
        let none = match_at_threshold(&ov, 0.7).unwrap();
        assert_eq!((none.tp(), none.fp(), none.fn_()), (0, 2, 1));
        assert!(match_at_threshold(&ov, 1.0).is_err());
        assert!(match_at_threshold(&ov, 0.0).is_err());
    }

    #[test]
    fn ap_formula_cases() {
        let gt = rects(40, 10, &[(1, 0, 0, 5, 5), (2, 10, 0, 5, 5), (3, 20, 0, 5, 5), (4, 30, 0, 5, 5)]);
        assert_eq!(average_precision(&gt, &gt, 0.5).unwrap(), 1.0);
        let three = rects(40, 10, &[(1, 0, 0, 5, 5), (2, 10, 0, 5, 5), (3, 20, 0, 5, 5)]);
        assert_eq!(average_precision(&three, &gt, 0.5).unwrap(), 0.75);
        let empty = LabelMap::new(40, 10);
        assert_eq!(average_precision(&empty, &empty, 0.5).unwrap(), 1.0);
        assert_eq!(panoptic_quality(&empty, &empty, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn split_particle_halves() {
        let gt = rects(10, 10, &[(1, 0, 0, 10, 10)]);
        let pred = rects(10, 10, &[(1, 0, 0, 10, 5), (2, 0, 5, 10, 5)]);
        let m = match_at_threshold(&iou_pairs(&pred, &gt).unwrap(), 0.4).unwrap();
        assert_eq!((m.tp(), m.fp(), m.fn_()), (1, 1, 0));
        // equal IoUs: the lower pred id wins
        assert_eq!(m.pairs[0].pred, 1);
        assert_eq!(average_precision(&pred, &gt, 0.4).unwrap(), 0.5);
    }

    #[test]
    fn pq_formula_case() {
        // pred 1 covers 8 of the 10 gt columns (IoU 0.8), pred 2 is spurious
        let gt = rects(30, 10, &[(1, 0, 0, 10, 10)]);
        let pred = rects(30, 10, &[(1, 0, 0, 8, 10), (2, 20, 0, 5, 5)]);
        let pq = panoptic_quality(&pred, &gt, 0.5).unwrap();
        assert!((pq - 0.8 / 1.5).abs() < 1e-12);
        assert!(panoptic_quality(&pred, &gt, 0.4).is_err());
    }

    #[test]
    fn mean_ap_cases() {
        let gt = rects(20, 10, &[(1, 0, 0, 5, 5), (2, 10, 0, 5, 5)]);
        let half = rects(20, 10, &[(1, 0, 0, 5, 5)]);
        assert_eq!(mean_ap(&[(gt.clone(), gt.clone()), (half.clone(), gt.clone())], 0.5).unwrap(), 0.75);
        let one = mean_ap(&[(half.clone(), gt.clone())], 0.5).unwrap();
        assert_eq!(mean_ap(&[(half.clone(), gt.clone()), (half, gt)], 0.5).unwrap(), one);
        assert_eq!(mean_ap(&[], 0.5), Err(EvalError::EmptyDataset));
    }

    #[test]
    fn density_split() {
        let (s, d) = split_sparse_dense(vec![5usize, 99, 100, 4000], |&c| c);
        assert_eq!((s, d), (vec![5, 99], vec![100, 4000]));
        let (s, d) = split_sparse_dense(Vec::<usize>::new(), |&c| c);
        assert!(s.is_empty() && d.is_empty());
        // a mixture whose median image holds 246 instances is mostly dense
        let counts: Vec<usize> = (0..101).map(|i| if i < 40 { 10 + i } else { 196 + i }).collect();
        let mut sorted = counts.clone();
        sorted.sort_unstable();
        assert_eq!(sorted[50], 246);
        let (s, d) = split_sparse_dense(counts, |&c| c);
        assert!(d.len() > s.len());
    }

    #[test]
    fn density_summary() {
        let gt = rects(20, 10, &[(1, 0, 0, 5, 5)]);
        let r = evaluate(&[("a".into(), gt.clone(), gt)], 0.5).unwrap();
        let s = summarize_by_density(r);
        assert!(s.dense.is_none());
        assert_eq!(s.sparse.unwrap().mean_ap, 1.0);
        assert_eq!(s.all.ap_definition, AP_DEFINITION);
    }

    #[test]
    fn scalebar_metrics() {
        let exact = |px: f64| ScaleBarResult { recognized_px: Some(px), truth_px: px, unit_ok: true, value_ok: true };
        let r = scalebar_report(&[exact(100.0), exact(50.0)]).unwrap();
        assert_eq!((r.unit_accuracy, r.value_accuracy, r.mae_px), (1.0, 1.0, 0.0));
        let rs: Vec<_> = [(100.0, 100.0), (80.0, 80.0), (101.0, 100.0), (199.0, 200.0)]
            .iter()
            .map(|&(a, b)| ScaleBarResult { recognized_px: Some(a), truth_px: b, unit_ok: true, value_ok: false })
            .collect();
        let r = scalebar_report(&rs).unwrap();
        assert_eq!(r.mae_px, 0.5);
        assert_eq!(r.value_accuracy, 0.0);
        assert!(r.error_percentiles.p50 <= r.error_percentiles.p75 && r.error_percentiles.p90 <= r.error_percentiles.p95);
        let failed = ScaleBarResult { recognized_px: None, truth_px: 40.0, unit_ok: false, value_ok: false };
        let r = scalebar_report(&[failed]).unwrap();
        assert_eq!((r.failures, r.mae_px, r.relative_errors[0]), (1, 40.0, 1.0));
        assert_eq!(scalebar_report(&[]), Err(EvalError::EmptyDataset));
    }

    /// Largest matching among pairs above `t`, by exhaustive search.
    fn brute_max_matching(pairs: &[IouPair], t: f64) -> usize {
        let cand: Vec<&IouPair> = pairs.iter().filter(|p| p.iou > t).collect();
        fn go(cand: &[&IouPair], i: usize, used_p: &mut Vec<u32>, used_g: &mut Vec<u32>) -> usize {
            if i == cand.len() {
                return 0;
            }
            let skip = go(cand, i + 1, used_p, used_g);
            let c = cand[i];
            if used_p.contains(&c.pred) || used_g.contains(&c.gt) {
                return skip;
            }
            used_p.push(c.pred);
            used_g.push(c.gt);
            let take = 1 + go(cand, i + 1, used_p, used_g);
            used_p.pop();
            used_g.pop();
            skip.max(take)
        }
        go(&cand, 0, &mut Vec::new(), &mut Vec::new())
    }

    /// PQ straight from pixel scans, one instance pair at a time.
    fn pq_by_scan(pred: &LabelMap, gt: &LabelMap) -> f64 {
        let ids = |lm: &LabelMap| lm.labels().iter().copied().filter(|&v| v != 0).collect::<BTreeSet<u32>>();
        let (pi, gi) = (ids(pred), ids(gt));
        let mut matched = Vec::new();
        for &p in &pi {
            for &g in &gi {
                let (mut inter, mut uni) = (0u64, 0u64);
                for (&a, &b) in pred.labels().iter().zip(gt.labels()) {
                    let (ia, ib) = (a == p, b == g);
                    inter += (ia && ib) as u64;
                    uni += (ia || ib) as u64;
                }
                let iou = inter as f64 / uni as f64;
                if iou > 0.5 {
                    matched.push(iou);
                }
            }
        }
        let tp = matched.len() as f64;
        let denom = tp + 0.5 * (pi.len() as f64 - tp) + 0.5 * (gi.len() as f64 - tp);
        if denom == 0.0 {
            1.0
        } else {
            matched.iter().sum::<f64>() / denom
        }
    }

    fn small_map() -> impl Strategy<Value = LabelMap> {
        prop::collection::vec((0usize..12, 0usize..12, 1usize..8, 1usize..8), 0..5).prop_map(|bs| {
            let boxes: Vec<_> = bs.iter().enumerate().map(|(i, &(x, y, w, h))| (i as u32 + 1, x, y, w, h)).collect();
            // later boxes paint over earlier ones; drop ids that vanished
            crate::imagecore::canonicalize_labels(&rects(16, 16, &boxes))
        })
    }

    fn permute(lm: &LabelMap, shift: u32) -> LabelMap {
        let n = lm.max_id();
        let v = lm.labels().iter().map(|&x| if x == 0 { 0 } else { (x - 1 + shift) % n + 1 + 7 }).collect();
        LabelMap::from_vec(lm.width(), lm.height(), v).unwrap()
    }

    proptest! {
        #[test]
        fn greedy_is_maximum_from_half(pred in small_map(), gt in small_map(), t in 0.5f64..0.95) {
            let ov = iou_pairs(&pred, &gt).unwrap();
            prop_assert_eq!(match_at_threshold(&ov, t).unwrap().tp(), brute_max_matching(&ov.pairs, t));
        }

        #[test]
        fn pq_matches_scan(pred in small_map(), gt in small_map()) {
            let pq = panoptic_quality(&pred, &gt, 0.5).unwrap();
            prop_assert!((pq - pq_by_scan(&pred, &gt)).abs() < 1e-12);
            prop_assert!(pq <= 1.0 + 1e-12);
            if pred == gt {
                prop_assert_eq!(pq, 1.0);
            }
        }

        #[test]
        fn ap_symmetric_and_monotone(pred in small_map(), gt in small_map(), t1 in 0.05f64..0.95, dt in 0.0f64..0.5) {
            let a = average_precision(&pred, &gt, t1).unwrap();
            prop_assert_eq!(a, average_precision(&gt, &pred, t1).unwrap());
            let t2 = (t1 + dt).min(0.99);
            prop_assert!(average_precision(&pred, &gt, t2).unwrap() <= a + 1e-12);
        }

        #[test]
        fn relabeling_changes_nothing(pred in small_map(), gt in small_map(), shift in 0u32..5) {
            prop_assume!(pred.max_id() > 0 && gt.max_id() > 0);
            let (p2, g2) = (permute(&pred, shift), permute(&gt, shift + 1));
            prop_assert_eq!(average_precision(&pred, &gt, 0.5).unwrap(), average_precision(&p2, &g2, 0.5).unwrap());
            prop_assert!((panoptic_quality(&pred, &gt, 0.5).unwrap() - panoptic_quality(&p2, &g2, 0.5).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn mean_ap_matches_per_image(maps in prop::collection::vec((small_map(), small_map()), 1..10)) {
            let want = maps.iter().map(|(p, g)| {
                let ov = iou_pairs(p, g).unwrap();
                let tp = brute_max_matching(&ov.pairs, 0.5) as f64;
                let denom = ov.pred_ids.len() as f64 + ov.gt_ids.len() as f64 - tp;
                if denom == 0.0 { 1.0 } else { tp / denom }
            }).sum::<f64>() / maps.len() as f64;
            prop_assert!((mean_ap(&maps, 0.5).unwrap() - want).abs() < 1e-12);
        }
    }
}
