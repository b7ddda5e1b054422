use std::fmt::Write;

use super::{BoxChart, ChartData, HistogramChart, ReportDocument, SampleSummary, ScatterChart};
use crate::metrology::Binning;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedReport {
    pub html: String,
    pub json: String,
}

const W: f64 = 560.0;
const H: f64 = 300.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

const CSS: &str = "body{font-family:sans-serif;margin:2em;color:#222}table{border-collapse:collapse;margin:.5em 0 1.5em}\
td,th{border:1px solid #ccc;padding:2px 8px;text-align:right}th{background:#f3f3f3}td.l,th.l{text-align:left}\
svg{border:1px solid #ddd;margin:.5em 1em 1em 0;background:#fff}.axis{font-size:11px}pre{background:#f7f7f7;padding:.5em}";

/// Numbers are printed exactly as the JSON twin spells them.
fn num(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "null".to_string())
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn axis_title(label: &str, unit: &str) -> String {
    if unit.is_empty() {
        esc(label)
    } else {
        format!("{} ({})", esc(label), esc(unit))
    }
}

/// Linear map of [lo, hi] onto [a, b]; a zero-width domain maps to the middle.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

fn svg_open(out: &mut String, title: &str) {
    let _ = write!(out, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">");
    let _ = write!(out, "<text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>", W / 2.0, esc(title));
    let _ = write!(
        out,
        "<line x1=\"{LEFT}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"#444\"/><line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{y}\" stroke=\"#444\"/>",
        y = H - BOTTOM,
        x2 = W - RIGHT
    );
}

fn no_data(out: &mut String) {
    let _ = write!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#888\">no data</text></svg>", W / 2.0, H / 2.0);
}

fn x_label(out: &mut String, text: &str) {
    let _ = write!(out, "<text class=\"axis\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">{text}</text>", (LEFT + W - RIGHT) / 2.0, H - 12.0);
}

fn y_label(out: &mut String, text: &str) {
    let _ = write!(out, "<text class=\"axis\" x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{text}</text>", H / 2.0, H / 2.0);
}

fn tick(out: &mut String, x: f64, y: f64, anchor: &str, v: f64) {
    let _ = write!(out, "<text class=\"axis\" x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\">{}</text>", num(v));
}

fn histogram_svg(out: &mut String, c: &HistogramChart) {
    svg_open(out, &c.title);
    if c.bins.is_empty() {
        return no_data(out);
    }
    let (lo, hi) = (c.bins[0].lo, c.bins[c.bins.len() - 1].hi);
    let peak = c.bins.iter().map(|b| b.weight).fold(0.0, f64::max);
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    for b in &c.bins {
        let (mut a, mut z) = (scale(b.lo, lo, hi, x0, x1), scale(b.hi, lo, hi, x0, x1));
        if hi <= lo {
            (a, z) = (x0 + 10.0, x1 - 10.0);
        }
        let top = if peak > 0.0 { scale(b.weight, 0.0, peak, y0, y1) } else { y0 };
        let _ = write!(
            out,
            "<rect x=\"{a:.1}\" y=\"{top:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#4a7ab5\" stroke=\"#fff\"><title>[{}, {}]: {}</title></rect>",
            (z - a).max(0.5),
            y0 - top,
            num(b.lo),
            num(b.hi),
            num(b.weight)
        );
    }
    tick(out, x0, y0 + 14.0, "start", lo);
    tick(out, x1, y0 + 14.0, "end", hi);
    tick(out, x0 - 4.0, y1 + 4.0, "end", peak);
    x_label(out, &axis_title(&c.axis.label, &c.axis.unit));
    y_label(out, &format!("weight ({})", weighting_name(c)));
    let _ = write!(out, "<text class=\"axis\" x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", W - RIGHT, TOP + 4.0, binning_text(c.binning));
    out.push_str("</svg>");
}

fn weighting_name(c: &HistogramChart) -> &'static str {
    match c.weighting {
        crate::metrology::Weighting::Count => "count",
        crate::metrology::Weighting::Area => "area",
        crate::metrology::Weighting::Volume => "volume",
    }
}

fn extent(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

fn scatter_svg(out: &mut String, c: &ScatterChart) {
    svg_open(out, &c.title);
    if c.xs.is_empty() {
        return no_data(out);
    }
    let ((xl, xh), (yl, yh)) = (extent(&c.xs), extent(&c.ys));
    let (x0, x1, y0, y1) = (LEFT + 6.0, W - RIGHT - 6.0, H - BOTTOM - 6.0, TOP + 6.0);
    for ((id, &x), &y) in c.ids.iter().zip(&c.xs).zip(&c.ys) {
        let _ = write!(
            out,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.5\" fill=\"#c0504d\" fill-opacity=\"0.7\"><title>#{id}: {}, {}</title></circle>",
            scale(x, xl, xh, x0, x1),
            scale(y, yl, yh, y0, y1),
            num(x),
            num(y)
        );
    }
    tick(out, LEFT, H - BOTTOM + 14.0, "start", xl);
    tick(out, W - RIGHT, H - BOTTOM + 14.0, "end", xh);
    tick(out, LEFT - 4.0, H - BOTTOM, "end", yl);
    tick(out, LEFT - 4.0, TOP + 4.0, "end", yh);
    x_label(out, &axis_title(&c.x.label, &c.x.unit));
    y_label(out, &axis_title(&c.y.label, &c.y.unit));
    out.push_str("</svg>");
}

fn box_svg(out: &mut String, c: &BoxChart) {
    svg_open(out, &c.title);
    if c.groups.is_empty() {
        return no_data(out);
    }
    let lo = c.groups.iter().map(|g| g.min).fold(f64::INFINITY, f64::min);
    let hi = c.groups.iter().map(|g| g.max).fold(f64::NEG_INFINITY, f64::max);
    let (y0, y1) = (H - BOTTOM - 4.0, TOP + 4.0);
    let slot = (W - RIGHT - LEFT) / c.groups.len() as f64;
    let y = |v: f64| scale(v, lo, hi, y0, y1);
    for (i, g) in c.groups.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let half = (slot * 0.3).min(40.0);
        let _ = write!(
            out,
            "<g><title>{}: q1 {}, median {}, q3 {}</title>\
<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"#444\"/>\
<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#9bbb59\" fill-opacity=\"0.6\" stroke=\"#444\"/>\
<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#222\" stroke-width=\"2\"/></g>",
            esc(&g.name),
            num(g.q1),
            num(g.median),
            num(g.q3),
            y(g.whisker_low),
            y(g.whisker_high),
            cx - half,
            y(g.q3),
            2.0 * half,
            (y(g.q1) - y(g.q3)).max(0.5),
            cx - half,
            y(g.median),
            cx + half,
            y(g.median)
        );
        for &o in &g.outliers {
            let _ = write!(out, "<circle cx=\"{cx:.1}\" cy=\"{:.1}\" r=\"2\" fill=\"none\" stroke=\"#444\"><title>{}</title></circle>", y(o), num(o));
        }
        let _ = write!(
            out,
            "<text class=\"axis\" x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{} (n = {})</text>",
            H - BOTTOM + 14.0,
            esc(&g.name),
            g.count
        );
    }
    tick(out, LEFT - 4.0, y0, "end", lo);
    tick(out, LEFT - 4.0, y1 + 4.0, "end", hi);
    y_label(out, &axis_title(&c.axis.label, &c.axis.unit));
    let _ = write!(out, "<text class=\"axis\" x=\"{}\" y=\"{}\" text-anchor=\"end\">whiskers at {} × IQR</text>", W - RIGHT, H - 12.0, num(c.whisker_iqr));
    out.push_str("</svg>");
}

fn sample_html(out: &mut String, s: &SampleSummary) {
    let _ = write!(out, "<h2>{}</h2><p>{} of {} instances after filtering", esc(&s.name), s.instance_count, s.total_instances);
    let f = &s.filter;
    let unit = f.unit.map_or("px", |u| u.symbol());
    if let Some(v) = f.diameter_min {
        let _ = write!(out, "; diameter ≥ {} {}", num(v), esc(unit));
    }
    if let Some(v) = f.diameter_max {
        let _ = write!(out, "; diameter ≤ {} {}", num(v), esc(unit));
    }
    if f.exclude_edge {
        out.push_str("; edge particles excluded");
    }
    out.push_str(".</p>");
    match &s.calibration {
        Some(c) => {
            let _ = write!(
                out,
                "<table><tr><th class=\"l\">scale bar</th><th>value</th><th>unit</th><th>pixel length</th><th>nm per pixel</th></tr>\
<tr><td class=\"l\">calibration</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr></table>",
                num(c.value),
                esc(c.unit.symbol()),
                c.pixel_length,
                num(c.nm_per_pixel)
            );
        }
        None => out.push_str("<p>Uncalibrated: lengths in pixels.</p>"),
    }
    out.push_str("<table><tr><th class=\"l\">metric</th><th>count</th><th>min</th><th>max</th><th>mean</th><th>std</th><th>P10</th><th>P50</th><th>P90</th></tr>");
    for q in &s.stats {
        let _ = write!(out, "<tr><td class=\"l\">{}</td>", axis_title(&q.quantity.name().replace('_', " "), q.quantity.unit()));
        match &q.summary {
            Some(v) => {
                let _ = write!(out, "<td>{}</td>", v.count);
                for x in [v.min, v.max, v.mean, v.std, v.p10, v.p50, v.p90] {
                    let _ = write!(out, "<td>{}</td>", num(x));
                }
            }
            None => out.push_str("<td colspan=\"8\" class=\"l\">empty</td>"),
        }
        out.push_str("</tr>");
    }
    out.push_str("</table>");
    let rows = [("px", &s.d_values_px), ("nm", &s.d_values_phys)];
    if rows.iter().any(|(_, d)| d.is_some()) {
        out.push_str("<table><tr><th class=\"l\">diameter</th><th>D10</th><th>D50</th><th>D90</th></tr>");
        for (unit, d) in rows {
            if let Some(d) = d {
                let _ = write!(out, "<tr><td class=\"l\">{unit}</td><td>{}</td><td>{}</td><td>{}</td></tr>", num(d.d10), num(d.d50), num(d.d90));
            }
        }
        out.push_str("</table>");
    }
}

/// Standalone HTML (no external references) and its JSON twin. Every
/// number in the HTML text is spelled as in the twin.
pub fn render_report(doc: &ReportDocument) -> RenderedReport {
    let json = serde_json::to_string_pretty(doc).expect("report documents serialize") + "\n";
    let mut out = String::new();
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\"><title>{t}</title><style>{CSS}</style></head><body><h1>{t}</h1>",
        t = esc(&doc.title)
    );
    for s in &doc.samples {
        sample_html(&mut out, s);
    }
    if !doc.charts.is_empty() {
        out.push_str("<h2>Charts</h2><div>");
        for c in &doc.charts {
            match c {
                ChartData::Histogram(h) => histogram_svg(&mut out, h),
                ChartData::Scatter(s) => scatter_svg(&mut out, s),
                ChartData::Box(b) => box_svg(&mut out, b),
            }
        }
        out.push_str("</div>");
    }
    let p = &doc.provenance;
    let _ = write!(out, "<h2>Provenance</h2><p>{} {}", esc(&p.software), esc(&p.version));
    if let Some(v) = p.task_version {
        let _ = write!(out, ", task version {v}");
    }
    out.push_str("</p>");
    if !p.inputs.is_empty() {
        out.push_str("<table><tr><th class=\"l\">input</th><th class=\"l\">sha256</th></tr>");
        for i in &p.inputs {
            let _ = write!(out, "<tr><td class=\"l\">{}</td><td class=\"l\"><code>{}</code></td></tr>", esc(&i.name), esc(&i.sha256));
        }
        out.push_str("</table>");
    }
    let params = serde_json::to_string_pretty(&p.params).unwrap_or_default();
    let _ = write!(out, "<pre>{}</pre></body></html>\n", esc(&params));
    RenderedReport { html: out, json }
}

fn binning_text(b: Binning) -> String {
    match b {
        Binning::Width(w) => format!("bin width {}", num(w)),
        Binning::Count(n) => format!("{n} bins"),
    }
}
