//! Minimal static SVG plots.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::analysis::{FitResult, Hist1D, RSeries};

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: [f64; 4] = [60.0, 20.0, 40.0, 50.0]; // left, right, top, bottom
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN[0] + (x - self.x.0) / (self.x.1 - self.x.0) * (W - MARGIN[0] - MARGIN[1])
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN[3] - (y - self.y.0) / (self.y.1 - self.y.0) * (H - MARGIN[2] - MARGIN[3])
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.08 * (hi - lo);
    (lo - pad, hi + pad)
}

fn open(out: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str, xticks: &[f64]) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (x0, x1, y0, y1) = (f.px(f.x.0), f.px(f.x.1), f.py(f.y.0), f.py(f.y.1));
    let _ = writeln!(out, r#"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
    for &t in xticks {
        let x = f.px(t);
        let _ = writeln!(out, r#"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y0 + 18.0, t);
    }
    for i in 0..=4 {
        let v = f.y.0 + (f.y.1 - f.y.0) * i as f64 / 4.0;
        let y = f.py(v);
        let _ = writeln!(out, r#"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 8.0, y + 4.0, format_tick(v));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 10.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn error_bar(out: &mut String, f: &Frame, x: f64, y: f64, e: f64, color: &str) {
    let (cx, cy) = (f.px(x), f.py(y));
    let _ = writeln!(out, r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{color}"/>"#, f.py(y - e), f.py(y + e));
    let _ = writeln!(out, r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="3" fill="{color}"/>"#);
}

/// Δφ histogram in degrees with the fitted A cos 2Δφ + B overlay.
pub fn dphi_svg(h: &Hist1D, fit: Option<&FitResult>, title: &str) -> String {
    let errs = h.errors();
    let lo = h.counts.iter().zip(&errs).map(|(c, e)| c - e).fold(f64::INFINITY, f64::min);
    let hi = h.counts.iter().zip(&errs).map(|(c, e)| c + e).fold(f64::NEG_INFINITY, f64::max);
    let f = Frame { x: (-180.0, 180.0), y: padded(lo.min(0.0), hi) };
    let mut out = String::new();
    open(&mut out, &f, title, "Δφ (deg)", "counts", &[-180.0, -90.0, 0.0, 90.0, 180.0]);
    for (c, (&y, &e)) in h.centers().iter().zip(h.counts.iter().zip(&errs)) {
        error_bar(&mut out, &f, c.to_degrees(), y, e, COLORS[0]);
    }
    if let Some(fit) = fit {
        let pts: Vec<String> = (0..=180)
            .map(|i| {
                let d = -PI + 2.0 * PI * i as f64 / 180.0;
                format!("{:.1},{:.1}", f.px(d.to_degrees()), f.py(fit.a * (2.0 * d).cos() + fit.b))
            })
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}"/>"#, pts.join(" "), COLORS[1]);
    }
    out.push_str("</svg>\n");
    out
}

/// R vs θ_ICS bin centre for several series.
pub fn r_series_svg(series: &[(String, &RSeries)], title: &str) -> String {
    let pts = series.iter().flat_map(|(_, s)| s.points.iter());
    let (mut lo, mut hi, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY, 10.0f64);
    for p in pts {
        lo = lo.min(p.r - p.sigma_r);
        hi = hi.max(p.r + p.sigma_r);
        xmax = xmax.max(p.theta_ics_hi_deg);
    }
    let f = Frame { x: (0.0, xmax), y: padded(lo.min(1.0), hi.max(1.0)) };
    let ticks: Vec<f64> = (0..=4).map(|i| (xmax * i as f64 / 4.0).round()).collect();
    let mut out = String::new();
    open(&mut out, &f, title, "θ_ICS (deg)", "R", &ticks);
    for (i, (label, s)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for p in &s.points {
            error_bar(&mut out, &f, p.center_deg(), p.r, p.sigma_r, color);
        }
        let y = MARGIN[2] + 16.0 + 16.0 * i as f64;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}" fill="{color}" text-anchor="end">{}</text>"#, W - MARGIN[1] - 8.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}
