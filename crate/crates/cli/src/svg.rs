//! Minimal self-contained SVG figures: line panels, bar panels, grids of
//! panels. Diagnostic quality only.

use std::fmt::Write;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 15.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub dashed: bool,
    /// Draw unconnected dots instead of a line.
    pub markers: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, color: &str) -> Self {
        Self {
            label: label.into(),
            points,
            color: color.to_string(),
            dashed: false,
            markers: false,
        }
    }

    pub fn markers(mut self) -> Self {
        self.markers = true;
        self
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Clone, Debug)]
pub enum Panel {
    Lines {
        title: String,
        x_label: String,
        y_label: String,
        series: Vec<Series>,
        log_y: bool,
    },
    Bars {
        title: String,
        x_label: String,
        y_label: String,
        labels: Vec<String>,
        values: Vec<f64>,
        /// Optional horizontal reference line.
        threshold: Option<f64>,
    },
}

impl Panel {
    pub fn lines(title: &str, x_label: &str, y_label: &str, series: Vec<Series>) -> Self {
        Panel::Lines {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series,
            log_y: false,
        }
    }

    pub fn log_y(mut self) -> Self {
        if let Panel::Lines { log_y, .. } = &mut self {
            *log_y = true;
        }
        self
    }

    pub fn bars(title: &str, x_label: &str, y_label: &str, labels: Vec<String>, values: Vec<f64>) -> Self {
        Panel::Bars {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            labels,
            values,
            threshold: None,
        }
    }

    pub fn with_threshold(mut self, t: f64) -> Self {
        if let Panel::Bars { threshold, .. } = &mut self {
            *threshold = Some(t);
        }
        self
    }
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.04;
    (lo - pad, hi + pad)
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".into()
        } else {
            s.to_string()
        }
    }
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }
}

fn axes(out: &mut String, f: &Frame, title: &str, x_label: &str, y_label: &str, log_y: bool) {
    let _ = writeln!(
        out,
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
        f.x0, f.y0, f.w, f.h
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = f.xr.0 + t * (f.xr.1 - f.xr.0);
        let yv = f.yr.0 + t * (f.yr.1 - f.yr.0);
        let (x, y) = (f.px(xv), f.py(yv));
        let ylab = if log_y { fmt_tick(10f64.powf(yv)) } else { fmt_tick(yv) };
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#444"/><text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"##,
            f.y0 + f.h,
            f.y0 + f.h + 4.0,
            f.y0 + f.h + 15.0,
            escape(&fmt_tick(xv))
        );
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#444"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"##,
            f.x0 - 4.0,
            f.x0,
            f.x0 - 6.0,
            y + 3.5,
            escape(&ylab)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"#,
        f.x0 + f.w / 2.0,
        f.y0 - 10.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
        f.x0 + f.w / 2.0,
        f.y0 + f.h + 32.0,
        escape(x_label)
    );
    let (lx, ly) = (f.x0 - 45.0, f.y0 + f.h / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.1}" y="{ly:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#,
        escape(y_label)
    );
}

fn render_panel(out: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let (x0, y0) = (ox + MARGIN_L, oy + MARGIN_T);
    let (w, h) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
    match panel {
        Panel::Lines {
            title,
            x_label,
            y_label,
            series,
            log_y,
        } => {
            let ty = |y: f64| if *log_y { y.max(1e-300).log10() } else { y };
            let pts = series
                .iter()
                .flat_map(|s| s.points.iter())
                .filter(|p| p.0.is_finite() && ty(p.1).is_finite());
            let (mut xl, mut xh, mut yl, mut yh) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for &(x, y) in pts {
                let y = ty(y);
                xl = xl.min(x);
                xh = xh.max(x);
                yl = yl.min(y);
                yh = yh.max(y);
            }
            let xr = if xh > xl { (xl, xh) } else { nice_range(xl, xh) };
            let f = Frame {
                x0,
                y0,
                w,
                h,
                xr,
                yr: nice_range(yl, yh),
            };
            axes(out, &f, title, x_label, y_label, *log_y);
            for (k, s) in series.iter().enumerate() {
                if s.markers {
                    for &(x, y) in &s.points {
                        let y = ty(y);
                        if x.is_finite() && y.is_finite() {
                            let _ = writeln!(
                                out,
                                r#"<circle cx="{:.2}" cy="{:.2}" r="1.3" fill="{}"/>"#,
                                f.px(x),
                                f.py(y),
                                escape(&s.color)
                            );
                        }
                    }
                    continue;
                }
                let mut d = String::new();
                for &(x, y) in &s.points {
                    let y = ty(y);
                    if x.is_finite() && y.is_finite() {
                        let _ = write!(d, "{:.2},{:.2} ", f.px(x), f.py(y));
                    }
                }
                let dash = if s.dashed { r#" stroke-dasharray="5,4""# } else { "" };
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
                    d.trim_end(),
                    escape(&s.color)
                );
                let ly = y0 + 14.0 + 14.0 * k as f64;
                let _ = writeln!(
                    out,
                    r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
                    x0 + w - 110.0,
                    x0 + w - 92.0,
                    escape(&s.color),
                    x0 + w - 88.0,
                    ly + 3.5,
                    escape(&s.label)
                );
            }
        }
        Panel::Bars {
            title,
            x_label,
            y_label,
            labels,
            values,
            threshold,
        } => {
            let top = values
                .iter()
                .copied()
                .chain(*threshold)
                .filter(|v| v.is_finite())
                .fold(0.0f64, f64::max);
            let f = Frame {
                x0,
                y0,
                w,
                h,
                xr: (0.0, values.len().max(1) as f64),
                yr: (0.0, if top > 0.0 { top * 1.08 } else { 1.0 }),
            };
            axes(out, &f, title, x_label, y_label, false);
            let bw = f.w / values.len().max(1) as f64;
            for (i, &v) in values.iter().enumerate() {
                let v = if v.is_finite() { v.max(0.0) } else { 0.0 };
                let (bx, by) = (f.x0 + bw * (i as f64 + 0.1), f.py(v));
                let _ = writeln!(
                    out,
                    r#"<rect x="{bx:.1}" y="{by:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                    bw * 0.8,
                    f.y0 + f.h - by,
                    PALETTE[0]
                );
                if let Some(label) = labels.get(i) {
                    let _ = writeln!(
                        out,
                        r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="middle">{}</text>"#,
                        bx + bw * 0.4,
                        by - 3.0,
                        escape(label)
                    );
                }
            }
            if let Some(t) = threshold {
                let y = f.py(*t);
                let _ = writeln!(
                    out,
                    r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-dasharray="4,3"/>"#,
                    f.x0,
                    f.x0 + f.w,
                    PALETTE[1]
                );
            }
        }
    }
}

/// Panels laid out row-major, `cols` per row.
pub fn figure(panels: &[Panel], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let (w, h) = (PANEL_W * cols.min(panels.len().max(1)) as f64, PANEL_H * rows as f64);
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, PANEL_W * (i % cols) as f64, PANEL_H * (i / cols) as f64);
    }
    out.push_str("</svg>\n");
    out
}
