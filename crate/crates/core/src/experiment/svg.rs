//! Minimal static SVG charts.

use std::fmt::Write;

use crate::metrics::BoxStats;

const W: f64 = 760.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 90.0;

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 10_000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Linear axis from zero to a rounded maximum.
struct Axis {
    max: f64,
}

impl Axis {
    fn new(max: f64) -> Self {
        let max = if max > 0.0 && max.is_finite() { max } else { 1.0 };
        let mag = 10f64.powf(max.log10().floor());
        let step = [1.0, 2.0, 2.5, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| s * 5.0 >= max)
            .unwrap_or(10.0 * mag);
        Axis { max: step * 5.0 }
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (H - TOP - BOTTOM) * (1.0 - v / self.max)
    }
}

fn frame(out: &mut String, title: &str, ylabel: &str, axis: &Axis) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">{}</text>
"#,
        W / 2.0,
        escape(title),
        (TOP + H - BOTTOM) / 2.0,
        escape(ylabel)
    );
    for i in 0..=5 {
        let v = axis.max * i as f64 / 5.0;
        let y = axis.y(v);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0,
            fmt_num(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/><line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - BOTTOM,
        H - BOTTOM,
        W - RIGHT,
        H - BOTTOM
    );
}

fn category_label(out: &mut String, x: f64, label: &str) {
    let y = H - BOTTOM + 14.0;
    let _ = writeln!(
        out,
        r#"<text transform="translate({x:.1},{y}) rotate(30)" text-anchor="start">{}</text>"#,
        escape(label)
    );
}

fn empty_note(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" fill="gray">no data</text>"#,
        W / 2.0,
        H / 2.0
    );
}

/// Box-and-whisker chart, one box per series.
pub fn box_plot(title: &str, ylabel: &str, series: &[(String, BoxStats)]) -> String {
    let top = series.iter().map(|(_, b)| b.whisker_high).fold(0.0, f64::max);
    let axis = Axis::new(top);
    let mut out = String::new();
    frame(&mut out, title, ylabel, &axis);
    if series.is_empty() {
        empty_note(&mut out);
    }
    let slot = (W - LEFT - RIGHT) / series.len().max(1) as f64;
    for (i, (name, b)) in series.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let half = (slot * 0.3).min(30.0);
        let (q1, q3, med) = (axis.y(b.dist.q1), axis.y(b.dist.q3), axis.y(b.dist.median));
        let (lo, hi) = (axis.y(b.whisker_low), axis.y(b.whisker_high));
        let c = color(i);
        let _ = writeln!(
            out,
            r#"<g><line x1="{cx:.1}" y1="{hi:.1}" x2="{cx:.1}" y2="{q3:.1}" stroke="black"/><line x1="{cx:.1}" y1="{q1:.1}" x2="{cx:.1}" y2="{lo:.1}" stroke="black"/><line x1="{:.1}" y1="{hi:.1}" x2="{:.1}" y2="{hi:.1}" stroke="black"/><line x1="{:.1}" y1="{lo:.1}" x2="{:.1}" y2="{lo:.1}" stroke="black"/><rect x="{:.1}" y="{q3:.1}" width="{:.1}" height="{:.1}" fill="{c}" fill-opacity="0.6" stroke="black"/><line x1="{:.1}" y1="{med:.1}" x2="{:.1}" y2="{med:.1}" stroke="black" stroke-width="2"/></g>"#,
            cx - half / 2.0,
            cx + half / 2.0,
            cx - half / 2.0,
            cx + half / 2.0,
            cx - half,
            2.0 * half,
            (q1 - q3).max(0.5),
            cx - half,
            cx + half,
        );
        category_label(&mut out, cx - 4.0, name);
    }
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one group per category, one bar per series.
pub fn bar_chart(title: &str, ylabel: &str, categories: &[String], series: &[(&str, Vec<f64>)]) -> String {
    let top = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0, f64::max);
    let axis = Axis::new(top);
    let mut out = String::new();
    frame(&mut out, title, ylabel, &axis);
    if categories.is_empty() {
        empty_note(&mut out);
    }
    let slot = (W - LEFT - RIGHT) / categories.len().max(1) as f64;
    let bar = slot * 0.7 / series.len().max(1) as f64;
    for (i, cat) in categories.iter().enumerate() {
        let x0 = LEFT + slot * i as f64 + slot * 0.15;
        for (j, (_, values)) in series.iter().enumerate() {
            let v = values.get(i).copied().unwrap_or(0.0);
            let y = axis.y(v);
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                x0 + bar * j as f64,
                bar * 0.95,
                (H - BOTTOM - y).max(0.0),
                color(j)
            );
        }
        category_label(&mut out, LEFT + slot * (i as f64 + 0.5) - 4.0, cat);
    }
    legend(&mut out, series.iter().map(|(n, _)| *n));
    out.push_str("</svg>\n");
    out
}

/// Polylines over a shared numeric x axis.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let xmax = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.0))
        .fold(0.0, f64::max);
    let ymax = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.1))
        .fold(0.0, f64::max);
    let axis = Axis::new(ymax);
    let xaxis = Axis::new(xmax);
    let xpos = |x: f64| LEFT + (W - LEFT - RIGHT) * x / xaxis.max;
    let mut out = String::new();
    frame(&mut out, title, ylabel, &axis);
    if series.iter().all(|(_, p)| p.is_empty()) {
        empty_note(&mut out);
    }
    for i in 0..=5 {
        let v = xaxis.max * i as f64 / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            xpos(v),
            H - BOTTOM + 16.0,
            fmt_num(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - BOTTOM + 34.0,
        escape(xlabel)
    );
    for (i, (_, points)) in series.iter().enumerate() {
        let pts: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", xpos(x), axis.y(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            pts.join(" "),
            color(i)
        );
    }
    legend(&mut out, series.iter().map(|(n, _)| n.as_str()));
    out.push_str("</svg>\n");
    out
}

fn legend<'a>(out: &mut String, names: impl Iterator<Item = &'a str>) {
    for (i, name) in names.enumerate() {
        let x = LEFT + 10.0 + (i % 4) as f64 * 160.0;
        let y = H - 28.0 + (i / 4) as f64 * 16.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{y:.1}">{}</text>"#,
            y - 9.0,
            color(i),
            x + 14.0,
            escape(name)
        );
    }
}
