//! Static SVG charts: accuracy bars with ±1 std whiskers and per-epoch
//! curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use graphaug_core::trainer::EvalReport;

use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

fn frame(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = write!(
        s,
        r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn y_axis(s: &mut String, lo: f64, hi: f64) {
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = H - PAD - (H - 2.0 * PAD) * k as f64 / 4.0;
        let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#, PAD - 4.0, y + 4.0);
    }
}

/// Mean test accuracy per method.
pub fn accuracy_bars(reports: &[EvalReport], title: &str) -> String {
    let mut s = frame(title);
    let hi = reports.iter().map(|r| r.mean + r.std).fold(0.0f64, f64::max).max(1e-9);
    y_axis(&mut s, 0.0, hi);
    let slot = (W - 2.0 * PAD) / reports.len().max(1) as f64;
    let scale = |v: f64| H - PAD - (H - 2.0 * PAD) * v / hi;
    for (i, r) in reports.iter().enumerate() {
        let x = PAD + slot * i as f64 + slot * 0.2;
        let w = slot * 0.6;
        let _ = write!(
            s,
            r##"<rect x="{x:.1}" y="{:.1}" width="{w:.1}" height="{:.1}" fill="#4477aa"/>"##,
            scale(r.mean),
            H - PAD - scale(r.mean)
        );
        let cx = x + w / 2.0;
        let _ = write!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            scale((r.mean - r.std).max(0.0)),
            scale(r.mean + r.std)
        );
        let _ =
            write!(s, r#"<text x="{cx:.1}" y="{}" text-anchor="middle">{}</text>"#, H - PAD + 16.0, escape(&r.method));
    }
    s.push_str("</svg>\n");
    s
}

/// One polyline per named series over its index.
pub fn curves(series: &[(String, Vec<f64>)], title: &str) -> String {
    let mut s = frame(title);
    let values = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, if hi > lo { hi } else { lo + 1.0 }) } else { (0.0, 1.0) };
    y_axis(&mut s, lo, hi);
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(1).max(2);
    let palette = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377"];
    for (k, (name, v)) in series.iter().enumerate() {
        let color = palette[k % palette.len()];
        let points: Vec<String> = v
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let px = PAD + (W - 2.0 * PAD) * i as f64 / (n - 1) as f64;
                let py = H - PAD - (H - 2.0 * PAD) * (y - lo) / (hi - lo);
                format!("{px:.1},{py:.1}")
            })
            .collect();
        let _ = write!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, points.join(" "));
        let _ = write!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - PAD + 4.0,
            PAD + 14.0 * k as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write(path: &Path, svg: &str) -> Result<()> {
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
