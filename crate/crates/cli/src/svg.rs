//! Minimal SVG output for region maps and phase portraits.

use std::fmt::Write;

use stab_core::analysis::{Label, SweepResult};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 110.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

const STABLE_FILL: &str = "#4c9a6a";
const OTHER_FILL: &str = "#c8553d";
const SERIES_COLORS: [&str; 6] = ["#222222", "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#d62728"];

/// Maps data coordinates into the plotting area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let widen = |lo: f64, hi: f64| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let (x0, x1) = widen(x0, x1);
        let (y0, y1) = widen(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn coord(v: f64) -> String {
    format!("{v:.2}")
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn open(out: &mut String) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
}

fn axes(out: &mut String, frame: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r) = (LEFT, WIDTH - RIGHT);
    let (t, b) = (TOP, HEIGHT - BOTTOM);
    writeln!(out, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t)
        .unwrap();
    let text = |out: &mut String, x: f64, y: f64, anchor: &str, extra: &str, s: &str| {
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="{anchor}"{extra}>{s}</text>"#,
            coord(x),
            coord(y)
        )
        .unwrap();
    };
    text(out, l, b + 18.0, "start", "", &tick(frame.x0));
    text(out, r, b + 18.0, "end", "", &tick(frame.x1));
    text(out, l - 6.0, b, "end", "", &tick(frame.y0));
    text(out, l - 6.0, t + 10.0, "end", "", &tick(frame.y1));
    text(out, (l + r) / 2.0, b + 40.0, "middle", "", xlabel);
    let (yx, yy) = (l - 30.0, (t + b) / 2.0);
    let rotate = format!(r#" transform="rotate(-90 {} {})""#, coord(yx), coord(yy));
    text(out, yx, yy, "middle", &rotate, ylabel);
}

fn polyline(out: &mut String, points: &[(f64, f64)], color: &str, width: f64, clip: bool) {
    if points.len() < 2 {
        return;
    }
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{},{}", coord(*x), coord(*y))).collect();
    let clip_attr = if clip { r#" clip-path="url(#plot)""# } else { "" };
    writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"{clip_attr}/>"#,
        pts.join(" ")
    )
    .unwrap();
}

/// Two-colour grid (stable vs. everything else) with the analytic boundary
/// drawn where the analytic label changes along the second axis.
pub fn region_map(result: &SweepResult, use_empirical: bool) -> String {
    let xs: Vec<f64> = result.axis1.values();
    let ys: Vec<f64> = result.axis2.values();
    let frame = Frame::new(xs[0], xs[xs.len() - 1], ys[0], ys[ys.len() - 1]);
    let half = |vals: &[f64]| if vals.len() > 1 { (vals[1] - vals[0]).abs() / 2.0 } else { 0.5 };
    let (hx, hy) = (half(&xs), half(&ys));
    let frame = Frame::new(frame.x0 - hx, frame.x1 + hx, frame.y0 - hy, frame.y1 + hy);

    let mut out = String::new();
    open(&mut out);
    for cell in &result.cells {
        let label = match (&cell.empirical, use_empirical) {
            (Some(v), true) => v.label,
            _ => cell.analytic.label,
        };
        let fill = if label == Label::Stable { STABLE_FILL } else { OTHER_FILL };
        let (x, y) = (frame.px(cell.v1 - hx), frame.py(cell.v2 + hy));
        let (w, h) = (frame.px(cell.v1 + hx) - x, frame.py(cell.v2 - hy) - y);
        writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}" shape-rendering="crispEdges"/>"#,
            coord(x),
            coord(y),
            coord(w),
            coord(h)
        )
        .unwrap();
    }

    // First crossing per column, interpolated on the smallest margin.
    let cols = ys.len();
    let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
    for (i, &x) in xs.iter().enumerate() {
        let column = &result.cells[i * cols..(i + 1) * cols];
        let crossing = column.windows(2).find_map(|w| {
            let (a, b) = (&w[0].analytic, &w[1].analytic);
            if (a.label == Label::Stable) == (b.label == Label::Stable) {
                return None;
            }
            let (ma, mb) = (a.margin_min(), b.margin_min());
            let t = if ma.is_finite() && mb.is_finite() && ma != mb { (ma / (ma - mb)).clamp(0.0, 1.0) } else { 0.5 };
            Some(w[0].v2 + t * (w[1].v2 - w[0].v2))
        });
        match crossing {
            Some(y) => runs.last_mut().unwrap().push((frame.px(x), frame.py(y))),
            None if !runs.last().unwrap().is_empty() => runs.push(Vec::new()),
            None => {}
        }
    }
    for run in &runs {
        polyline(&mut out, run, "black", 2.0, false);
    }
    axes(&mut out, &frame, result.axis1.axis.name(), result.axis2.axis.name());
    out.push_str("</svg>\n");
    out
}

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
    /// Whether the series takes part in choosing the view window.
    pub bounded: bool,
}

/// `(x, u)` trajectories, one polyline each, clipped to the extent of the
/// bounded series.
pub fn phase_plane(series: &[Series<'_>]) -> String {
    let mut pool: Vec<&(f64, f64)> =
        series.iter().filter(|s| s.bounded).flat_map(|s| s.points.iter()).collect();
    if pool.is_empty() {
        pool = series.iter().flat_map(|s| s.points.iter()).collect();
    }
    let finite = pool.into_iter().filter(|(x, u)| x.is_finite() && u.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, u) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(u);
        y1 = y1.max(u);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let (px, py) = (0.1 * (x1 - x0), 0.1 * (y1 - y0));
    let frame = Frame::new(x0 - px, x1 + px, y0 - py, y1 + py);

    let mut out = String::new();
    open(&mut out);
    writeln!(
        out,
        r#"<defs><clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{}" height="{}"/></clipPath></defs>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    )
    .unwrap();
    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let limit = 1e6 * (frame.x1 - frame.x0).abs().max((frame.y1 - frame.y0).abs());
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .take_while(|(x, u)| x.abs() < limit && u.abs() < limit)
            .map(|&(x, u)| (frame.px(x), frame.py(u)))
            .collect();
        polyline(&mut out, &pts, color, 1.5, true);
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            coord(WIDTH - RIGHT + 8.0),
            coord(TOP + 16.0 * (i as f64 + 1.0)),
            s.name
        )
        .unwrap();
    }
    axes(&mut out, &frame, "x", "u");
    out.push_str("</svg>\n");
    out
}
