use granula_core::scalebar::{recognize, DetectionKind, ExternalDetection, ScaleBarParams};
use granula_core::synthgen::{scalebar_corpus, ScaleBarSpec};

#[test]
fn synthetic_corpus_accuracy() {
    let items = scalebar_corpus(&ScaleBarSpec::default(), 200, 2024).unwrap();
    let params = ScaleBarParams::default();
    let (mut unit_ok, mut value_ok, mut abs_err, mut exact) = (0, 0, 0usize, 0);
    for (i, (img, t)) in items.iter().enumerate() {
        let text = ExternalDetection { bbox: t.text_bbox, kind: DetectionKind::Text, text: Some(t.text.clone()), confidence: 0.9 };
        match recognize(img, &[text], &params) {
            Ok(r) => {
                let c = r.calibration.unwrap();
                unit_ok += (c.unit == t.unit) as usize;
                value_ok += (c.value == t.value) as usize;
                let e = r.endpoints.pixel_length.abs_diff(t.pixel_length);
                if e != 0 {
                    eprintln!("item {i}: {} vs {}", r.endpoints.pixel_length, t.pixel_length);
                }
                abs_err += e;
                exact += (e == 0) as usize;
            }
            Err(e) => {
                eprintln!("item {i}: {e}");
                abs_err += t.pixel_length;
            }
        }
    }
    let mae = abs_err as f64 / items.len() as f64;
    eprintln!("unit {unit_ok} value {value_ok} mae {mae} exact {exact}");
    assert_eq!(unit_ok, items.len());
    assert_eq!(value_ok, items.len());
    assert!(mae <= 1.0);
    assert!(exact * 2 >= items.len());
}
