//! Hand-written SVG figures. Every plot is a pure function of its input data,
//! so regenerating from a saved report reproduces the same bytes.

use std::fmt::Write;

use cyclefield::analysis::{AnalysisReport, Series};

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = span(&mut xs.clone());
        let (y0, y1) = span(&mut ys.clone());
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    s
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(s, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    let text = |s: &mut String, x: f64, y: f64, anchor: &str, v: &str| {
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{}</text>"#, escape(v));
    };
    text(s, l, b + 16.0, "start", &format!("{:.3}", f.x0));
    text(s, r, b + 16.0, "end", &format!("{:.3}", f.x1));
    text(s, l - 4.0, b, "end", &format!("{:.3}", f.y0));
    text(s, l - 4.0, t + 10.0, "end", &format!("{:.3}", f.y1));
    text(s, W / 2.0, H - 12.0, "middle", xlabel);
    text(s, 14.0, H / 2.0, "middle", ylabel);
}

fn polyline(s: &mut String, f: &Frame, pts: impl Iterator<Item = (f64, f64)>, color: &str, width: f64) {
    let mut d = String::new();
    for (x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        let _ = write!(d, "{:.2},{:.2} ", f.px(x), f.py(y));
    }
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#, d.trim_end());
}

fn legend(s: &mut String, labels: &[String]) {
    for (k, label) in labels.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * k as f64;
        let x = W - MARGIN - 70.0;
        let _ = writeln!(s, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/>"#, x + 18.0, COLORS[k % 3]);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#, x + 22.0, y + 4.0, escape(label));
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `x_i(t)` for every coordinate.
pub fn time_series(series: &Series, title: &str) -> String {
    let dim = series.x.first().map_or(0, Vec::len);
    let f = Frame::fit(series.t.iter().copied(), series.x.iter().flatten().copied());
    let mut s = open(title);
    axes(&mut s, &f, "t", "x");
    for i in 0..dim {
        polyline(&mut s, &f, series.t.iter().copied().zip(series.x.iter().map(|x| x[i])), COLORS[i % 3], 1.2);
    }
    legend(&mut s, &(1..=dim).map(|i| format!("x_{i}")).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Isometric view of a three-dimensional orbit, with an optional reference
/// curve in grey.
pub fn projection(orbit: &[Vec<f64>], reference: &[Vec<f64>], title: &str) -> String {
    let c = 3f64.sqrt() / 2.0;
    let iso = |x: &Vec<f64>| (c * (x[1] - x[0]), x[2] - 0.5 * (x[0] + x[1]));
    let all: Vec<(f64, f64)> = orbit.iter().chain(reference).filter(|x| x.len() >= 3).map(iso).collect();
    let f = Frame::fit(all.iter().map(|p| p.0), all.iter().map(|p| p.1));
    let mut s = open(title);
    axes(&mut s, &f, "(x_2 - x_1)·√3/2", "x_3 - (x_1 + x_2)/2");
    polyline(&mut s, &f, reference.iter().filter(|x| x.len() >= 3).map(iso), "#999999", 2.5);
    polyline(&mut s, &f, orbit.iter().filter(|x| x.len() >= 3).map(iso), COLORS[0], 1.0);
    s.push_str("</svg>\n");
    s
}

/// Heat map of a square matrix with the values printed in the cells.
pub fn heatmap(m: &[Vec<f64>], title: &str) -> String {
    let n = m.len().max(1);
    let lim = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let side = (H - 2.0 * MARGIN) / n as f64;
    let left = (W - side * n as f64) / 2.0;
    let mut s = open(title);
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let t = (v / lim).clamp(-1.0, 1.0);
            let (r, g, b) = if t >= 0.0 {
                (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
            } else {
                (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
            };
            let (x, y) = (left + side * j as f64, MARGIN + side * i as f64);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{side:.1}" height="{side:.1}" fill="rgb({:.0},{:.0},{:.0})" stroke="black"/>"#,
                r, g, b
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{v:.4}</text>"#,
                x + side / 2.0,
                y + side / 2.0 + 4.0
            );
        }
    }
    for k in 0..n {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#, left - 6.0, MARGIN + side * (k as f64 + 0.5), k + 1);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, left + side * (k as f64 + 0.5), MARGIN - 6.0, k + 1);
    }
    s.push_str("</svg>\n");
    s
}

/// Training and validation loss per epoch on a log scale.
pub fn loss_curve(train: &[f64], validation: &[f64], title: &str) -> String {
    let lg = |v: &f64| v.max(1e-300).log10();
    let f = Frame::fit((0..train.len().max(validation.len())).map(|k| k as f64), train.iter().chain(validation).map(lg));
    let mut s = open(title);
    axes(&mut s, &f, "epoch", "log10 loss");
    polyline(&mut s, &f, train.iter().enumerate().map(|(k, v)| (k as f64, lg(v))), COLORS[0], 1.2);
    polyline(&mut s, &f, validation.iter().enumerate().map(|(k, v)| (k as f64, lg(v))), COLORS[1], 1.2);
    legend(&mut s, &["train".to_string(), "validation".to_string()]);
    s.push_str("</svg>\n");
    s
}

/// The figures derived from an analysis report, by file name.
pub fn report_plots(report: &AnalysisReport) -> Vec<(&'static str, String)> {
    let mut out = vec![
        ("timeseries.svg", time_series(&report.series, &format!("{}: learned dynamics", report.run_id))),
        ("projection.svg", projection(&report.series.x, &report.reference, &format!("{}: orbit and target cycle", report.run_id))),
    ];
    if let Some(b) = &report.block_means {
        out.push(("connectivity.svg", heatmap(&b.means, &format!("{}: block-mean connectivity", report.run_id))));
    }
    out
}
