//! Self-contained SVG rendering: log-log loss curves and grid heatmaps.
//!
//! Output depends only on the input values, so rendering the same data twice
//! yields identical bytes.

use std::fmt::Write;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

#[derive(Clone, Debug, Default)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.into(), points }
    }

    /// Loss curve `(t, L(t))` for `t >= 1`; step 0 cannot sit on a log axis.
    pub fn from_losses(label: impl Into<String>, losses: &[f64]) -> Self {
        let points = losses.iter().enumerate().skip(1).map(|(t, l)| (t as f64, *l)).collect();
        Series::new(label, points)
    }
}

/// Reference power law `y = y0 (x/x0)^slope`, drawn dashed.
#[derive(Clone, Debug)]
pub struct Guide {
    pub label: String,
    pub slope: f64,
    pub anchor: (f64, f64),
}

/// Vertical marker line at `x`.
#[derive(Clone, Debug)]
pub struct Marker {
    pub label: String,
    pub x: f64,
}

#[derive(Clone, Debug, Default)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub guides: Vec<Guide>,
    pub markers: Vec<Marker>,
}

#[derive(Clone, Debug, Default)]
pub struct Heatmap {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Cell centers along x (columns).
    pub xs: Vec<f64>,
    /// Cell centers along y (rows).
    pub ys: Vec<f64>,
    /// `values[row][col]`; non-finite cells are drawn gray.
    pub values: Vec<Vec<f64>>,
    /// Color by `log10(value)` instead of value.
    pub log_color: bool,
    /// Overlay polyline in data coordinates.
    pub boundary: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
}

fn axis_labels(out: &mut String, x_label: &str, y_label: &str) {
    let cx = LEFT + (WIDTH - LEFT - RIGHT) / 2.0;
    let cy = TOP + (HEIGHT - TOP - BOTTOM) / 2.0;
    let _ = writeln!(out, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, HEIGHT - 12.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{cy:.1}" text-anchor="middle" transform="rotate(-90 16 {cy:.1})">{}</text>"#,
        escape(y_label)
    );
}

struct LogAxis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl LogAxis {
    fn new(min: f64, max: f64, p0: f64, p1: f64) -> Self {
        let (mut lo, mut hi) = (min.log10(), max.log10());
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        LogAxis { lo, hi, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v.log10() - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }

    fn decades(&self) -> impl Iterator<Item = i32> {
        (self.lo.ceil() as i32)..=(self.hi.floor() as i32)
    }
}

fn check_log(v: f64, axis: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Plot(format!("value {v} cannot be placed on the logarithmic {axis} axis")))
    }
}

pub fn line_chart_svg(chart: &LineChart) -> Result<String> {
    if chart.series.is_empty() || chart.series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::Plot("no series to draw".into()));
    }
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, 0.0f64, f64::INFINITY, 0.0f64);
    for s in &chart.series {
        for &(x, y) in &s.points {
            check_log(x, "x")?;
            check_log(y, "y")?;
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    for g in &chart.guides {
        check_log(g.anchor.0, "x")?;
        check_log(g.anchor.1, "y")?;
    }
    let xa = LogAxis::new(xmin, xmax, LEFT, WIDTH - RIGHT);
    let ya = LogAxis::new(ymin, ymax, HEIGHT - BOTTOM, TOP);

    let mut out = String::new();
    header(&mut out, &chart.title);
    let _ = writeln!(
        out,
        r#"<defs><clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}"/></clipPath></defs>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    for d in xa.decades() {
        let px = xa.map(10f64.powi(d));
        let _ = writeln!(out, r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.1}" stroke="#ddd"/>"##, HEIGHT - BOTTOM);
        let _ = writeln!(out, r#"<text x="{px:.2}" y="{:.1}" text-anchor="middle">1e{d}</text>"#, HEIGHT - BOTTOM + 15.0);
    }
    for d in ya.decades() {
        let py = ya.map(10f64.powi(d));
        let _ = writeln!(out, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.1}" y2="{py:.2}" stroke="#ddd"/>"##, WIDTH - RIGHT);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">1e{d}</text>"#, LEFT - 5.0, py + 4.0);
    }
    axis_labels(&mut out, &chart.x_label, &chart.y_label);

    let _ = writeln!(out, r#"<g clip-path="url(#plot)">"#);
    for g in &chart.guides {
        let y_at = |x: f64| g.anchor.1 * (x / g.anchor.0).powf(g.slope);
        let (x0, x1) = (10f64.powf(xa.lo), 10f64.powf(xa.hi));
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="5,4"/>"##,
            xa.map(x0),
            ya.map(y_at(x0)),
            xa.map(x1),
            ya.map(y_at(x1))
        );
    }
    for m in &chart.markers {
        if m.x > 0.0 && m.x.is_finite() {
            let px = xa.map(m.x);
            let _ = writeln!(
                out,
                r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.1}" stroke="#555" stroke-dasharray="2,3"/>"##,
                HEIGHT - BOTTOM
            );
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.1}">{}</text>"#, px + 3.0, TOP + 12.0, escape(&m.label));
        }
    }
    for (i, s) in chart.series.iter().enumerate() {
        let mut d = String::new();
        for (k, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, xa.map(x), ya.map(y));
        }
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#, PALETTE[i % PALETTE.len()]);
    }
    let _ = writeln!(out, "</g>");

    let lx = WIDTH - RIGHT + 10.0;
    let mut ly = TOP + 10.0;
    for (i, s) in chart.series.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 18.0,
            PALETTE[i % PALETTE.len()],
            lx + 22.0,
            ly + 4.0,
            escape(&s.label)
        );
        ly += 16.0;
    }
    for g in &chart.guides {
        let _ = writeln!(
            out,
            r##"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="#888" stroke-dasharray="5,4"/><text x="{:.1}" y="{:.1}">{}</text>"##,
            lx + 18.0,
            lx + 22.0,
            ly + 4.0,
            escape(&g.label)
        );
        ly += 16.0;
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Blue to yellow ramp, `s` in [0, 1].
fn ramp(s: f64) -> String {
    const STOPS: [(f64, f64, f64); 4] = [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (253.0, 231.0, 37.0)];
    let s = s.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (s.floor() as usize).min(STOPS.len() - 2);
    let f = s - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let c = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(a.0, b.0), c(a.1, b.1), c(a.2, b.2))
}

fn edges(centers: &[f64]) -> Vec<f64> {
    let n = centers.len();
    if n == 1 {
        return vec![centers[0] - 0.5, centers[0] + 0.5];
    }
    let mut e = Vec::with_capacity(n + 1);
    e.push(centers[0] - (centers[1] - centers[0]) / 2.0);
    for w in centers.windows(2) {
        e.push((w[0] + w[1]) / 2.0);
    }
    e.push(centers[n - 1] + (centers[n - 1] - centers[n - 2]) / 2.0);
    e
}

pub fn heatmap_svg(map: &Heatmap) -> Result<String> {
    if map.xs.is_empty() || map.ys.is_empty() {
        return Err(Error::Plot("empty grid".into()));
    }
    if map.values.len() != map.ys.len() || map.values.iter().any(|r| r.len() != map.xs.len()) {
        return Err(Error::Plot("value grid does not match the axis lengths".into()));
    }
    let key = |v: f64| if map.log_color { v.log10() } else { v };
    let usable = |v: f64| v.is_finite() && (!map.log_color || v > 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in map.values.iter().flatten() {
        if usable(v) {
            lo = lo.min(key(v));
            hi = hi.max(key(v));
        }
    }
    let xe = edges(&map.xs);
    let ye = edges(&map.ys);
    let (x0, x1) = (xe[0], xe[xe.len() - 1]);
    let (y0, y1) = (ye[0], ye[ye.len() - 1]);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (WIDTH - LEFT - RIGHT);
    let py = |y: f64| HEIGHT - BOTTOM - (y - y0) / (y1 - y0) * (HEIGHT - TOP - BOTTOM);

    let mut out = String::new();
    header(&mut out, &map.title);
    for (r, row) in map.values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let fill = if usable(v) {
                let s = if hi > lo { (key(v) - lo) / (hi - lo) } else { 0.5 };
                ramp(s)
            } else {
                "#bbbbbb".to_string()
            };
            let (ax, bx) = (px(xe[c]), px(xe[c + 1]));
            let (ay, by) = (py(ye[r + 1]), py(ye[r]));
            let _ = writeln!(
                out,
                r#"<rect x="{ax:.2}" y="{ay:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                bx - ax,
                by - ay
            );
        }
    }
    if map.boundary.len() >= 2 {
        let pts: Vec<String> = map.boundary.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="black" stroke-width="2"/>"#, pts.join(" "));
    }
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    for k in 0..=4 {
        let x = x0 + (x1 - x0) * k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.1}" text-anchor="middle">{x:.3}</text>"#, px(x), HEIGHT - BOTTOM + 15.0);
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{y:.3}</text>"#, LEFT - 5.0, py(y) + 4.0);
    }
    axis_labels(&mut out, &map.x_label, &map.y_label);

    // color bar
    let bx = WIDTH - RIGHT + 20.0;
    let steps = 32;
    let bh = (HEIGHT - TOP - BOTTOM) / steps as f64;
    for i in 0..steps {
        let s = (i as f64 + 0.5) / steps as f64;
        let y = HEIGHT - BOTTOM - (i + 1) as f64 * bh;
        let _ = writeln!(out, r#"<rect x="{bx:.1}" y="{y:.2}" width="14" height="{:.2}" fill="{}"/>"#, bh + 0.3, ramp(s));
    }
    if lo.is_finite() {
        let unit = if map.log_color { "log10 " } else { "" };
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{unit}{hi:.3}</text>"#, bx + 18.0, TOP + 8.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{unit}{lo:.3}</text>"#, bx + 18.0, HEIGHT - BOTTOM);
    }
    out.push_str("</svg>\n");
    Ok(out)
}
