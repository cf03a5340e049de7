//! Minimal static SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            it.filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (mut x0, mut x1) = span(&mut xs.clone());
        let (mut y0, mut y1) = span(&mut ys.clone());
        if !(x0 < x1) {
            x0 = if x0.is_finite() { x0 - 1.0 } else { 0.0 };
            x1 = x0 + 2.0;
        }
        if !(y0 < y1) {
            y0 = if y0.is_finite() { y0 - 1.0 } else { 0.0 };
            y1 = y0 + 2.0;
        }
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn header(s: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
    let (l, r, b, t) = (PAD, W - PAD, H - PAD, PAD);
    let _ = write!(s, r#"<polyline points="{l},{t} {l},{b} {r},{b}" fill="none" stroke="black"/>"#);
    let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, esc(xlabel));
    let _ = write!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(ylabel)
    );
    for (v, anchor, x, y) in [
        (f.x0, "start", l, b + 16.0),
        (f.x1, "end", r, b + 16.0),
        (f.y0, "end", l - 4.0, b),
        (f.y1, "end", l - 4.0, t + 4.0),
    ] {
        let _ = write!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{}</text>"#, tick(v));
    }
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = PAD + 14.0 * i as f64;
        let c = COLORS[i % COLORS.len()];
        let _ = write!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/><text x="{}" y="{}">{}</text>"#,
            W - PAD - 110.0,
            y - 9.0,
            W - PAD - 96.0,
            y,
            esc(name)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, lines: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts = lines.iter().flat_map(|(_, p)| p.iter());
    let f = Frame::new(pts.clone().map(|p| p.0), pts.map(|p| p.1));
    let mut s = String::new();
    header(&mut s, &f, title, xlabel, ylabel);
    for (i, (_, p)) in lines.iter().enumerate() {
        let coords: Vec<String> = p
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = write!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            coords.join(" "),
            COLORS[i % COLORS.len()]
        );
    }
    let names: Vec<&str> = lines.iter().map(|(n, _)| n.as_str()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

/// Step outlines of histograms sharing `edges`.
pub fn histogram_chart(title: &str, xlabel: &str, edges: &[f64], series: &[(&str, &[usize])]) -> String {
    let ys = series.iter().flat_map(|(_, c)| c.iter().map(|&v| v as f64)).chain([0.0]);
    let f = Frame::new(edges.iter().copied(), ys);
    let mut s = String::new();
    header(&mut s, &f, title, xlabel, "count");
    for (i, (_, counts)) in series.iter().enumerate() {
        let mut coords = vec![format!("{:.2},{:.2}", f.px(edges[0]), f.py(0.0))];
        for (b, &c) in counts.iter().enumerate() {
            let y = f.py(c as f64);
            coords.push(format!("{:.2},{:.2}", f.px(edges[b]), y));
            coords.push(format!("{:.2},{:.2}", f.px(edges[b + 1]), y));
        }
        coords.push(format!("{:.2},{:.2}", f.px(edges[edges.len() - 1]), f.py(0.0)));
        let _ = write!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            coords.join(" "),
            COLORS[i % COLORS.len()]
        );
    }
    let names: Vec<&str> = series.iter().map(|(n, _)| *n).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}
