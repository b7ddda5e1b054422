//! Acceptance run: one PASS/FAIL line per criterion, details on stderr.
//! Exits nonzero when any criterion fails.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use granula_client::{Client, TaskUpload};
use granula_core::api::TaskState;
use granula_core::corrections::CorrectionAction;
use granula_core::dynamics::{segment, DynamicsParams};
use granula_core::evalkit::{
    average_precision, iou_pairs, match_at_threshold, panoptic_quality, scalebar_report, score_scalebar, split_sparse_dense,
    DENSE_MIN_INSTANCES,
};
use granula_core::flowgen::{labels_to_flows, FlowGenParams};
use granula_core::imagecore::{decode_rle, encode_flow, encode_raster_png, FlowField, LabelMap};
use granula_core::metrology::{measure_all, percentile, FilterCriteria, Weighting};
use granula_core::report::{sample_summary, ChartData};
use granula_core::scalebar::{calibrate_length, LengthUnit, ScaleBarParams};
use granula_core::synthgen::{gen_micrograph, gen_scene, scalebar_corpus, MicrographSpec, ScaleBarSpec, SceneSpec, Shape};
use granula_service::{app, serve, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CHILD_ENV: &str = "GRANULA_ACCEPTANCE_CHILD";

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict { ok, detail: detail.into() }
}

fn hash_labels(lm: &LabelMap) -> u64 {
    let mut h = DefaultHasher::new();
    (lm.width(), lm.height()).hash(&mut h);
    lm.labels().hash(&mut h);
    h.finish()
}

fn hash_flow(f: &FlowField) -> u64 {
    let mut h = DefaultHasher::new();
    (f.width, f.height).hash(&mut h);
    for plane in [&f.dy, &f.dx, &f.fg] {
        for v in plane.iter() {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
}

fn round_trip(lm: &LabelMap) -> (FlowField, LabelMap) {
    let f = labels_to_flows(lm, &FlowGenParams::default()).expect("flows");
    let l = segment(&f, &DynamicsParams::default()).expect("segment");
    (f, l)
}

// ---------------------------------------------------------------- 1 and 3

fn round_trip_scene(i: u64) -> SceneSpec {
    let shape = [Shape::Disk, Shape::Ellipse, Shape::Polygon][(i % 3) as usize];
    let count = 50 + ((i * 4549) % 451) as usize;
    // median ~24 px; sparser scenes get larger particles
    let mu = if count < 200 { 3.6 } else { 3.0 };
    SceneSpec { min_diameter: Some(8.0), max_diameter: Some(120.0), ..SceneSpec::new(1024, 1024, count, shape, mu, 0.5, 1000 + i) }
}

struct RoundTripStats {
    gt: usize,
    pred: usize,
    matched: usize,
    iou_sum: f64,
    ap_sum: f64,
    images: usize,
    min_particles: usize,
    max_particles: usize,
    min_diam: f64,
    max_diam: f64,
    seconds_by_threads: BTreeMap<usize, f64>,
    hashes_by_pass: Vec<(usize, Vec<(u64, u64)>)>,
}

fn criterion1(scenes: &[LabelMap]) -> RoundTripStats {
    let mut s = RoundTripStats {
        gt: 0,
        pred: 0,
        matched: 0,
        iou_sum: 0.0,
        ap_sum: 0.0,
        images: scenes.len(),
        min_particles: usize::MAX,
        max_particles: 0,
        min_diam: f64::INFINITY,
        max_diam: 0.0,
        seconds_by_threads: BTreeMap::new(),
        hashes_by_pass: Vec::new(),
    };
    for threads in [8, 4, 1, 8] {
        let p = pool(threads);
        let t = Instant::now();
        let outs: Vec<(FlowField, LabelMap)> = p.install(|| scenes.iter().map(round_trip).collect());
        s.seconds_by_threads.entry(threads).or_insert(t.elapsed().as_secs_f64());
        s.hashes_by_pass.push((threads, outs.iter().map(|(f, l)| (hash_flow(f), hash_labels(l))).collect()));
        if s.hashes_by_pass.len() == 1 {
            for (gt, (_, pred)) in scenes.iter().zip(&outs) {
                let m = match_at_threshold(&iou_pairs(pred, gt).unwrap(), 0.5).unwrap();
                s.gt += gt.instance_count();
                s.pred += pred.instance_count();
                s.matched += m.tp();
                s.iou_sum += m.pairs.iter().map(|p| p.iou).sum::<f64>();
                s.ap_sum += average_precision(pred, gt, 0.5).unwrap();
            }
        }
    }
    s
}

// ---------------------------------------------------------------- 2

fn dense_spec(size: usize, particles: usize, seed: u64) -> SceneSpec {
    SceneSpec { min_diameter: Some(8.0), max_diameter: Some(60.0), ..SceneSpec::new(size, size, particles, Shape::Ellipse, 3.0, 0.3, seed) }
}

fn vm_hwm_kb() -> Option<u64> {
    let s = std::fs::read_to_string("/proc/self/status").ok()?;
    s.lines().find(|l| l.starts_with("VmHWM:"))?.split_whitespace().nth(1)?.parse().ok()
}

/// Runs in a child process so its peak memory is measured alone.
fn big_child(threads: usize) {
    let t = Instant::now();
    let (_, truth) = gen_scene(&dense_spec(8192, 20000, 77)).expect("scene");
    let (f, l) = pool(threads).install(|| round_trip(&truth.label_map));
    let ap = average_precision(&l, &truth.label_map, 0.5).unwrap();
    let out = serde_json::json!({
        "seconds": t.elapsed().as_secs_f64(),
        "instances": truth.label_map.instance_count(),
        "ap50": ap,
        "hash": format!("{:016x}{:016x}", hash_flow(&f), hash_labels(&l)),
        "vm_hwm_kb": vm_hwm_kb(),
    });
    println!("{out}");
}

fn run_big_child(threads: usize) -> Result<serde_json::Value, String> {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let out = Command::new(exe).env(CHILD_ENV, threads.to_string()).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("child exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())
}

struct DenseRun {
    verdict: Verdict,
    /// Output digests of the 2048^2 scene per thread count.
    dense_hashes: Vec<String>,
    /// Output digests of the 8192^2 scene per thread count.
    big_hashes: Vec<String>,
}

fn criterion2() -> DenseRun {
    let (_, truth) = gen_scene(&dense_spec(2048, 2300, 5)).expect("scene");
    let n = truth.label_map.instance_count();
    let mut dense_hashes = Vec::new();
    let mut secs8 = 0.0;
    let mut ap = 0.0;
    for threads in [8, 4, 1] {
        let t = Instant::now();
        let (f, l) = pool(threads).install(|| round_trip(&truth.label_map));
        let dt = t.elapsed().as_secs_f64();
        if threads == 8 {
            secs8 = dt;
            ap = average_precision(&l, &truth.label_map, 0.5).unwrap();
        }
        dense_hashes.push(format!("{:016x}{:016x}", hash_flow(&f), hash_labels(&l)));
    }
    let mut big = Vec::new();
    for threads in [8, 1] {
        match run_big_child(threads) {
            Ok(v) => big.push((threads, v)),
            Err(e) => {
                return DenseRun { verdict: verdict(false, format!("8192^2 run failed: {e}")), dense_hashes, big_hashes: Vec::new() };
            }
        }
    }
    let big_hashes = big.iter().map(|(_, v)| v["hash"].as_str().unwrap_or("").to_string()).collect();
    let (_, v8) = &big[0];
    let peak_gb = v8["vm_hwm_kb"].as_u64().map_or(f64::NAN, |k| k as f64 / (1024.0 * 1024.0));
    let big_secs = v8["seconds"].as_f64().unwrap_or(f64::NAN);
    let ok = n >= 2000 && secs8 <= 30.0 && ap >= 0.85 && peak_gb <= 16.0;
    let detail = format!(
        "2048^2 with {n} particles: {secs8:.2} s on 8 threads, AP@0.5 {ap:.4}; 8192^2 with {} particles: {big_secs:.1} s, peak RSS {peak_gb:.2} GB, AP@0.5 {:.4}",
        v8["instances"], v8["ap50"].as_f64().unwrap_or(f64::NAN)
    );
    DenseRun { verdict: verdict(ok, detail), dense_hashes, big_hashes }
}

// ---------------------------------------------------------------- 4

/// Independent recomputation: IoU matrix by brute force, matches are
/// pairs above the threshold (unique from 0.5 up).
fn oracle_ap_pq(pred: &LabelMap, gt: &LabelMap, t: f64) -> (f64, f64) {
    let ids = |lm: &LabelMap| lm.labels().iter().copied().filter(|&v| v != 0).collect::<BTreeSet<u32>>();
    let (pi, gi) = (ids(pred), ids(gt));
    let (mut tp, mut iou_sum) = (0usize, 0.0);
    let mut matched_p = BTreeSet::new();
    let mut matched_g = BTreeSet::new();
    for &p in &pi {
        for &g in &gi {
            let (mut inter, mut union) = (0u64, 0u64);
            for (&a, &b) in pred.labels().iter().zip(gt.labels()) {
                let (x, y) = (a == p, b == g);
                inter += (x && y) as u64;
                union += (x || y) as u64;
            }
            let iou = inter as f64 / union as f64;
            if iou > t {
                assert!(matched_p.insert(p) && matched_g.insert(g), "matches above 0.5 are unique");
                tp += 1;
                iou_sum += iou;
            }
        }
    }
    let (fp, fn_) = (pi.len() - tp, gi.len() - tp);
    let denom = (tp + fp + fn_) as f64;
    let ap = if denom == 0.0 { 1.0 } else { tp as f64 / denom };
    let pq_denom = tp as f64 + 0.5 * (fp + fn_) as f64;
    let pq = if pq_denom == 0.0 { 1.0 } else { iou_sum / pq_denom };
    (ap, pq)
}

fn random_pair(rng: &mut ChaCha8Rng) -> (LabelMap, LabelMap) {
    let (w, h) = (40, 32);
    let mut gt = LabelMap::new(w, h);
    let mut pred = LabelMap::new(w, h);
    let n = rng.gen_range(0..8);
    for id in 1..=n {
        let (x0, y0) = (rng.gen_range(0..w - 4), rng.gen_range(0..h - 4));
        let (bw, bh) = (rng.gen_range(2..12).min(w - x0), rng.gen_range(2..12).min(h - y0));
        let fill = |lm: &mut LabelMap, x0: usize, y0: usize, id: u32| {
            for y in y0..(y0 + bh).min(h) {
                for x in x0..(x0 + bw).min(w) {
                    lm.set(x, y, id);
                }
            }
        };
        fill(&mut gt, x0, y0, id);
        if rng.gen_bool(0.8) {
            let dx = rng.gen_range(0..3);
            let dy = rng.gen_range(0..3);
            fill(&mut pred, x0 + dx, y0 + dy, id + 10);
        }
    }
    for k in 0..rng.gen_range(0..3) {
        let (x0, y0) = (rng.gen_range(0..w - 3), rng.gen_range(0..h - 3));
        for y in y0..y0 + 3 {
            for x in x0..x0 + 3 {
                pred.set(x, y, 50 + k);
            }
        }
    }
    (pred, gt)
}

fn rects(w: usize, h: usize, boxes: &[(u32, usize, usize, usize, usize)]) -> LabelMap {
    let mut lm = LabelMap::new(w, h);
    for &(id, x0, y0, bw, bh) in boxes {
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                lm.set(x, y, id);
            }
        }
    }
    lm
}

fn criterion4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (pred, gt) = random_pair(&mut rng);
        for t in [0.5, 0.75] {
            let (ap, pq) = oracle_ap_pq(&pred, &gt, t);
            worst = worst.max((average_precision(&pred, &gt, t).unwrap() - ap).abs());
            worst = worst.max((panoptic_quality(&pred, &gt, t).unwrap() - pq).abs());
        }
    }
    let gt4 = rects(64, 16, &[(1, 0, 0, 10, 10), (2, 15, 0, 10, 10), (3, 30, 0, 10, 10), (4, 45, 0, 10, 10)]);
    let perfect = average_precision(&gt4, &gt4, 0.5).unwrap() == 1.0 && panoptic_quality(&gt4, &gt4, 0.5).unwrap() == 1.0;
    let three = rects(64, 16, &[(1, 0, 0, 10, 10), (2, 15, 0, 10, 10), (3, 30, 0, 10, 10)]);
    let ap34 = average_precision(&three, &gt4, 0.5).unwrap();
    let gt1 = rects(64, 16, &[(1, 0, 0, 10, 10)]);
    let pred1 = rects(64, 16, &[(1, 0, 0, 8, 10), (2, 40, 0, 5, 5)]);
    let pq = panoptic_quality(&pred1, &gt1, 0.5).unwrap();
    let counts = vec![99usize, 100, 101, 3];
    let (sparse, dense) = split_sparse_dense(counts, |&c| c);
    let split_ok = DENSE_MIN_INSTANCES == 100 && sparse == vec![99, 3] && dense == vec![100, 101];
    let ok = worst <= 1e-12 && perfect && ap34 == 0.75 && (pq - 0.8 / 1.5).abs() < 1e-12 && format!("{pq:.4}") == "0.5333" && split_ok;
    verdict(
        ok,
        format!("max |impl - oracle| over 50 scenes x 2 thresholds {worst:.1e}; perfect {perfect}; 3-of-4 AP {ap34}; TP@0.8+FP PQ {pq:.4}; split at 100 {split_ok}"),
    )
}

// ---------------------------------------------------------------- 5

fn criterion5() -> Verdict {
    let t = Instant::now();
    let items = scalebar_corpus(&ScaleBarSpec::default(), 200, 2025).expect("corpus");
    let params = ScaleBarParams::default();
    let results: Vec<_> = items.iter().map(|(img, truth)| score_scalebar(img, truth, &params)).collect();
    let r = scalebar_report(&results).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let ok = r.unit_accuracy == 1.0 && r.value_accuracy == 1.0 && r.mae_px <= 1.0 && r.exact_count * 2 >= r.count && secs <= 60.0;
    verdict(
        ok,
        format!(
            "{} images: unit {:.3}, value {:.3}, MAE {:.3} px, exact {}/{}, {} failures, {secs:.1} s",
            r.count, r.unit_accuracy, r.value_accuracy, r.mae_px, r.exact_count, r.count, r.failures
        ),
    )
}

// ---------------------------------------------------------------- 6

/// Cumulative scan over sorted samples: each sample owns the midpoint of its
/// weight span, rescaled so the extremes sit at 0 and 100.
fn oracle_percentile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    if n == 1 {
        return pairs[0].0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let span = total - (pairs[0].1 + pairs[n - 1].1) / 2.0;
    let mut positions = Vec::with_capacity(n);
    let mut before = 0.0;
    for &(_, w) in &pairs {
        positions.push((100.0 * (before + w / 2.0 - pairs[0].1 / 2.0) / span).clamp(0.0, 100.0));
        before += w;
    }
    if q <= positions[0] {
        return pairs[0].0;
    }
    for k in 1..n {
        if q < positions[k] {
            let (p0, p1) = (positions[k - 1], positions[k]);
            return pairs[k - 1].0 + (pairs[k].0 - pairs[k - 1].0) * (q - p0) / (p1 - p0);
        }
    }
    pairs[n - 1].0
}

fn criterion6() -> Verdict {
    let mut disk = LabelMap::new(80, 80);
    for y in 0..80 {
        for x in 0..80 {
            let (dx, dy) = (x as f64 - 40.0, y as f64 - 40.0);
            if dx * dx + dy * dy <= 32.0 * 32.0 {
                disk.set(x, y, 1);
            }
        }
    }
    let d = measure_all(&disk, None)[0].diameter_px;
    // same 64 px extent as the disk; the ratio to pi/4 is (n/(n-1))^2 for an n px side
    let square = rects(80, 80, &[(1, 8, 8, 64, 64)]);
    let sph = measure_all(&square, None)[0].sphericity;
    let rect = rects(240, 40, &[(1, 20, 10, 200, 20)]);
    let ar = measure_all(&rect, None)[0].aspect_ratio;
    let cal = calibrate_length(200, 5.0, LengthUnit::Micrometer).unwrap().nm_per_pixel;
    let quarter_pi = std::f64::consts::FRAC_PI_4;

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..40);
        let values: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.2) { rng.gen_range(0..5) as f64 } else { rng.gen_range(-50.0..50.0) }).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
        let q = if rng.gen_bool(0.1) { [0.0, 100.0, 50.0][rng.gen_range(0..3)] } else { rng.gen_range(0.0..100.0) };
        let got = percentile(&values, Some(&weights), q).unwrap();
        let want = oracle_percentile(&values, &weights, q);
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    let ok = (d - 64.0).abs() / 64.0 <= 0.01 && (sph - quarter_pi).abs() / quarter_pi <= 0.05 && (ar - 10.0).abs() / 10.0 <= 0.05 && cal == 25.0 && worst <= 1e-9;
    verdict(
        ok,
        format!(
            "disk diameter {d:.3} px ({:+.2}%); square sphericity {sph:.4} ({:+.2}% vs pi/4); aspect {ar:.4}; 200 px = 5 um -> {cal} nm/px; percentile max rel diff {worst:.1e} over 1000 cases",
            100.0 * (d - 64.0) / 64.0,
            100.0 * (sph - quarter_pi) / quarter_pi
        ),
    )
}

// ---------------------------------------------------------------- 7

struct Server {
    client: Client,
    stop: tokio::sync::oneshot::Sender<()>,
    handle: tokio::task::JoinHandle<()>,
}

async fn start(dir: &Path) -> Server {
    let (router, _) = app(&ServiceConfig::new(dir)).expect("service");
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
    let addr = listener.local_addr().unwrap();
    let (stop, rx) = tokio::sync::oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        serve(listener, router, async move {
            let _ = rx.await;
        })
        .await
        .expect("serve");
    });
    Server { client: Client::new(format!("http://{addr}")), stop, handle }
}

async fn stop(s: Server) {
    let _ = s.stop.send(());
    let _ = s.handle.await;
}

fn decoded_labels(doc: &granula_core::api::ResultsDocument) -> LabelMap {
    let mut lm = LabelMap::new(doc.width, doc.height);
    for inst in &doc.instances {
        for (i, set) in decode_rle(&inst.rle).unwrap().into_iter().enumerate() {
            if set {
                lm.labels_mut()[i] = inst.id;
            }
        }
    }
    lm
}

async fn workflow(dir: &Path) -> Result<String, String> {
    let e = |x: granula_client::ClientError| x.to_string();
    let scene = SceneSpec::new(0, 0, 150, Shape::Ellipse, 3.6, 0.4, 17);
    // 50 um over 200 px: 250 nm per pixel, so 20-60 px particles are 5-15 um
    let m = gen_micrograph(&MicrographSpec::square(1024, scene, 200, 50, LengthUnit::Micrometer)).map_err(|x| x.to_string())?;
    let flow = labels_to_flows(&m.truth.label_map, &FlowGenParams::default()).map_err(|x| x.to_string())?;
    let up = TaskUpload {
        name: Some("workflow".into()),
        image: encode_raster_png(&m.image).unwrap(),
        flow: Some(encode_flow(&flow).unwrap()),
        labels: None,
        detections: Some(serde_json::to_vec(&m.detections).unwrap()),
        params: None,
    };
    let srv = start(dir).await;
    let c = srv.client.clone();
    let t = Instant::now();
    let st = c.create_task(up).await.map_err(e)?;
    let st = c.wait_settled(&st.id, Duration::from_secs(60)).await.map_err(e)?;
    let ready_s = t.elapsed().as_secs_f64();
    if st.state != TaskState::Ready {
        return Err(format!("task ended {:?}: {:?}", st.state, st.reason));
    }
    if ready_s > 10.0 {
        return Err(format!("ready after {ready_s:.2} s"));
    }
    let id = st.id.clone();
    let doc = c.results(&id).await.map_err(e)?;
    let cal = doc.scale.calibration.ok_or("no calibration read from the scale bar")?;
    if cal.nm_per_pixel != 250.0 {
        return Err(format!("calibration {} nm/px", cal.nm_per_pixel));
    }

    let fc = FilterCriteria { diameter_min: Some(5.0), diameter_max: Some(15.0), unit: Some(LengthUnit::Micrometer), exclude_edge: true };
    let live = c.set_filter(&id, &fc).await.map_err(e)?;
    let offline_metrics = measure_all(&decoded_labels(&doc), Some(&cal));
    let (offline, kept) = sample_summary(&st.name, &offline_metrics, &fc, Some(&cal), Weighting::Count).map_err(|x| x.to_string())?;
    if live.summary != offline {
        return Err("filtered statistics differ from the offline computation".into());
    }
    let (n_all, n_kept) = (offline_metrics.len(), kept.len());

    // delete one instance, split another through its centroid, merge the halves back
    let del = doc.instances.iter().find(|i| !i.metrics.touches_edge).ok_or("no interior instance")?.id;
    let target = doc
        .instances
        .iter()
        .filter(|i| i.id != del && !i.metrics.touches_edge)
        .max_by(|a, b| a.metrics.area_px.total_cmp(&b.metrics.area_px))
        .ok_or("no split target")?;
    let (cx, b) = (target.metrics.centroid_x.floor() + 0.5, target.bbox);
    c.correct(&id, CorrectionAction::Delete { id: del }, Some("acceptance")).await.map_err(e)?;
    let polyline = vec![[cx, b.y as f64 - 2.0], [cx, (b.y + b.h) as f64 + 1.0]];
    let split = c.correct(&id, CorrectionAction::Split { id: target.id, polyline }, Some("acceptance")).await.map_err(e)?;
    let new_id = *split.effect.created.first().ok_or("split created nothing")?;
    let merged = c.correct(&id, CorrectionAction::Merge { ids: vec![target.id, new_id] }, Some("acceptance")).await.map_err(e)?;
    let after = c.results(&id).await.map_err(e)?;
    if after.version != 5 || after.instances.len() != n_all - 1 {
        return Err(format!("version {} with {} instances after corrections", after.version, after.instances.len()));
    }
    let bytes = c.results_bytes(&id).await.map_err(e)?;
    let (_, report_text) = c.report_json(&id).await.map_err(e)?;
    stop(srv).await;

    let srv = start(dir).await;
    let c = srv.client.clone();
    let replayed = c.results_bytes(&id).await.map_err(e)?;
    let (report, report_text2) = c.report_json(&id).await.map_err(e)?;
    stop(srv).await;
    if replayed != bytes || report_text2 != report_text {
        return Err("state after restart is not byte-identical".into());
    }
    if report.samples.first() != Some(&merged.summary) || report.provenance.task_version != Some(5) {
        return Err("report statistics differ from the live statistics".into());
    }
    Ok(format!(
        "ready in {ready_s:.2} s; 5-15 um + edge filter keeps {n_kept}/{n_all}, equal to offline; delete/split/merge replayed byte-identically after restart ({} bytes); report twin equals live statistics",
        bytes.len()
    ))
}

fn criterion7() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().expect("runtime");
    match rt.block_on(workflow(dir.path())) {
        Ok(d) => verdict(true, d),
        Err(d) => verdict(false, d),
    }
}

// ---------------------------------------------------------------- 8

fn granula(args: &[&str]) -> Result<serde_json::Value, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_granula")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("granula {} -> {}: {}", args.join(" "), out.status, String::from_utf8_lossy(&out.stderr)));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| format!("granula {}: {e}", args.join(" ")))
}

fn comparison(dir: &Path) -> Result<String, String> {
    let d = dir.to_str().unwrap();
    let samples = [("fine", 3.0, 11u64), ("coarse", 3.5, 12u64)];
    for (name, mu, seed) in samples {
        granula(&[
            "synth", "sample", "--out", d, "--name", name, "--seed", &seed.to_string(), "--mu", &mu.to_string(), "--sigma", "0.25", "--particles", "120",
            "--width", "768", "--height", "768", "--bar-length", "200", "--value", "20", "--unit", "um",
        ])?;
    }
    let report = dir.join("comparison.html");
    let out = granula(&["analyze", d, "--report", report.to_str().unwrap()])?;
    let results = out["results"].as_array().ok_or("no results")?;
    if results.len() != 2 || results.iter().any(|r| r["ok"] != true || r["source"] != "flow") {
        return Err(format!("unexpected per-file results: {out}"));
    }
    let doc: granula_core::report::ReportDocument =
        serde_json::from_slice(&std::fs::read(dir.join("comparison.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let html = std::fs::read_to_string(&report).map_err(|e| e.to_string())?;
    let d50 = |name: &str| doc.samples.iter().find(|s| s.name == name).and_then(|s| s.d_values_phys).map(|p| p.d50);
    let (fine, coarse) = (d50("fine").ok_or("fine sample missing")?, d50("coarse").ok_or("coarse sample missing")?);
    // generating medians: exp(mu) px at 100 nm/px
    let (gen_fine, gen_coarse) = (3.0f64.exp() * 100.0, 3.5f64.exp() * 100.0);
    let hist = doc.charts.iter().filter(|c| matches!(c, ChartData::Histogram(_))).count();
    let boxes = doc.charts.iter().filter(|c| matches!(c, ChartData::Box(_))).count();
    if !(fine < coarse) || hist < 2 || boxes < 1 || !html.contains("<svg") {
        return Err(format!("D50 fine {fine:.1} nm, coarse {coarse:.1} nm, {hist} histograms, {boxes} box charts"));
    }
    Ok(format!(
        "D50 fine {fine:.0} nm < coarse {coarse:.0} nm (generating medians {gen_fine:.0} / {gen_coarse:.0} nm); {hist} histograms, {boxes} box comparisons, {} charts total",
        doc.charts.len()
    ))
}

fn criterion8() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    match comparison(dir.path()) {
        Ok(d) => verdict(true, d),
        Err(d) => verdict(false, d),
    }
}

// ---------------------------------------------------------------- main

fn main() {
    if let Ok(t) = std::env::var(CHILD_ENV) {
        big_child(t.parse().expect("thread count"));
        return;
    }
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    eprintln!("acceptance: {cpus} CPU(s) available; thread counts above that are time-sliced");
    let mut verdicts: Vec<(u32, &str, Verdict)> = Vec::new();

    let t = Instant::now();
    let truths: Vec<_> = (0..100).map(|i| gen_scene(&round_trip_scene(i)).expect("scene").1).collect();
    let labels: Vec<LabelMap> = truths.iter().map(|t| t.label_map.clone()).collect();
    let mut s = criterion1(&labels);
    for t in &truths {
        s.min_particles = s.min_particles.min(t.placed);
        s.max_particles = s.max_particles.max(t.placed);
        for p in &t.particles {
            s.min_diam = s.min_diam.min(p.nominal_diameter);
            s.max_diam = s.max_diam.max(p.nominal_diameter);
        }
    }
    let recall = s.matched as f64 / s.gt as f64;
    let precision = s.matched as f64 / s.pred as f64;
    let mean_iou = s.iou_sum / s.matched as f64;
    let mean_ap = s.ap_sum / s.images as f64;
    let secs8 = s.seconds_by_threads[&8];
    eprintln!("criterion 1: {:.1} s total including generation", t.elapsed().as_secs_f64());
    verdicts.push((
        1,
        "flow round-trip oracle",
        verdict(
            recall >= 0.98 && precision >= 0.98 && mean_iou >= 0.90 && mean_ap >= 0.90 && secs8 <= 600.0,
            format!(
                "{} scenes, {}-{} particles placed, diameters {:.1}-{:.1} px: recall {recall:.4}, precision {precision:.4}, mean IoU {mean_iou:.4}, mean AP@0.5 {mean_ap:.4}; {secs8:.1} s on 8 threads",
                s.images, s.min_particles, s.max_particles, s.min_diam, s.max_diam
            ),
        ),
    ));

    let dense = criterion2();
    verdicts.push((2, "dense-regime stress", dense.verdict));

    let reference = &s.hashes_by_pass[0].1;
    let rt_same = s.hashes_by_pass.iter().all(|(_, h)| h == reference);
    let dense_same = dense.dense_hashes.windows(2).all(|w| w[0] == w[1]);
    let big_same = dense.big_hashes.len() == 2 && dense.big_hashes[0] == dense.big_hashes[1];
    verdicts.push((
        3,
        "determinism",
        verdict(
            rt_same && dense_same && big_same,
            format!(
                "round-trip outputs over passes at {:?} threads identical: {rt_same}; 2048^2 at 8/4/1 identical: {dense_same}; 8192^2 at 8/1 identical: {big_same}",
                s.hashes_by_pass.iter().map(|(t, _)| *t).collect::<Vec<_>>()
            ),
        ),
    ));

    verdicts.push((4, "evaluation oracle", criterion4()));
    verdicts.push((5, "scale-bar corpus", criterion5()));
    verdicts.push((6, "metrology analytics", criterion6()));
    verdicts.push((7, "platform workflow over HTTP", criterion7()));
    verdicts.push((8, "two-sample comparison via CLI", criterion8()));

    let mut failed = 0;
    for (n, name, v) in &verdicts {
        println!("{} criterion {n} ({name}): {}", if v.ok { "PASS" } else { "FAIL" }, v.detail);
        failed += !v.ok as usize;
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
