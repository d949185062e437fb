use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::LearningCurve;
use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
/// Points drawn per curve at most.
const MAX_POINTS: usize = 1_000;

fn color(label: &str, i: usize) -> &'static str {
    const PALETTE: [&str; 6] = ["#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e", "#8c564b"];
    match label {
        "classical" => PALETTE[0],
        "consistent" => PALETTE[1],
        "advantage" => PALETTE[2],
        _ => PALETTE[(i + 3) % PALETTE.len()],
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// SVG line chart of the mean curves: one polyline and one legend entry per
/// curve. The output depends only on the input curves.
pub fn render_svg(curves: &[LearningCurve]) -> Result<String> {
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no curves to plot".into()));
    }
    let len = curves.iter().map(|c| c.mean.len()).max().unwrap_or(0);
    if len == 0 {
        return Err(Error::InvalidArgument("curves are empty".into()));
    }
    let values = || curves.iter().flat_map(|c| c.mean.iter().copied()).filter(|v| v.is_finite());
    let mut lo = values().fold(f64::INFINITY, f64::min);
    let mut hi = values().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x_of = |t: usize| LEFT + plot_w * if len > 1 { t as f64 / (len - 1) as f64 } else { 0.5 };
    let y_of = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);

    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let env = curves[0].env;
    let _ = writeln!(w, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(env.name()));
    let _ = writeln!(w, r##"<g class="axes" stroke="#333" fill="none"><rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}"/></g>"##);

    for k in 0..=4 {
        let frac = k as f64 / 4.0;
        let v = lo + frac * (hi - lo);
        let y = y_of(v);
        let _ = writeln!(w, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + plot_w);
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, tick(v));
        let t = ((len - 1) as f64 * frac).round() as usize;
        let x = x_of(t);
        let _ = writeln!(w, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + plot_h + 18.0, t + 1);
    }
    let _ = writeln!(w, r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">step</text>"#, LEFT + plot_w / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        w,
        r#"<text class="y-label" x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">mean cumulative discounted reward</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (i, c) in curves.iter().enumerate() {
        let n = c.mean.len();
        let stride = n.div_ceil(MAX_POINTS).max(1);
        let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
        if idx.last() != Some(&(n - 1)) {
            idx.push(n - 1);
        }
        let points: Vec<String> = idx
            .iter()
            .filter(|&&t| c.mean[t].is_finite())
            .map(|&t| format!("{:.2},{:.2}", x_of(t), y_of(c.mean[t])))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline class="curve" data-label="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            escape(&c.label),
            color(&c.label, i),
            points.join(" ")
        );
    }

    let _ = writeln!(w, r#"<g class="legend">"#);
    for (i, c) in curves.iter().enumerate() {
        let y = TOP + 16.0 + 18.0 * i as f64;
        let x = LEFT + plot_w - 150.0;
        let _ = writeln!(
            w,
            r#"<g class="legend-entry"><line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            x + 24.0,
            color(&c.label, i),
            x + 30.0,
            y + 4.0,
            escape(&c.label)
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, "</svg>");
    Ok(s)
}

/// Writes [`render_svg`] output to `path`. Nothing is written on error.
pub fn render_plot(curves: &[LearningCurve], path: &Path) -> Result<()> {
    let svg = render_svg(curves)?;
    fs::write(path, svg)?;
    Ok(())
}
