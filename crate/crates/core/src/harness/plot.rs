//! Self-contained SVG 1.1 plots with byte-stable output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::harness::experiment::ExperimentRow;
use crate::harness::fit::fit_loglog_slope;
use crate::solver::TraceRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo > 0.0 {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

impl Frame {
    fn new(points: impl Iterator<Item = (f64, f64)> + Clone) -> Self {
        let fold = |f: fn(&(f64, f64)) -> f64| {
            points
                .clone()
                .map(|p| f(&p))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (xl, xh) = fold(|p| p.0);
        let (yl, yh) = fold(|p| p.1);
        Self {
            x: padded(xl, xh),
            y: padded(yl, yh),
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    /// Segment of `y = y0 + slope (x - x0)` clipped to the x range.
    fn line(&self, out: &mut String, x0: f64, y0: f64, slope: f64, style: &str) {
        let (a, b) = self.x;
        let (ya, yb) = (y0 + slope * (a - x0), y0 + slope * (b - x0));
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#,
            self.px(a),
            self.py(ya),
            self.px(b),
            self.py(yb)
        );
    }
}

fn header(out: &mut String, title: &str, frame: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x_axis, y_axis) = (HEIGHT - BOTTOM, LEFT);
    let _ = writeln!(
        out,
        r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{x_axis}" x2="{:.2}" y2="{x_axis}"/><line x1="{y_axis}" y1="{TOP}" x2="{y_axis}" y2="{x_axis}"/></g>"#,
        WIDTH - RIGHT
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = frame.x.0 + t * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + t * (frame.y.1 - frame.y.0);
        let (px, py) = (frame.px(xv), frame.py(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{x_axis}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            x_axis + 5.0,
            x_axis + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{y_axis}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            y_axis - 5.0,
            y_axis - 8.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(out: &mut String, entries: &[(&str, String)]) {
    for (i, (style, label)) in entries.iter().enumerate() {
        let y = TOP + 14.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT - 230.0;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" {style}/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
            x + 24.0,
            x + 30.0,
            y + 4.0,
            escape(label)
        );
    }
}

const FIT_STYLE: &str = r##"stroke="black" stroke-width="1.5""##;
const LOWER_STYLE: &str = r##"stroke="green" stroke-width="1.5" stroke-dasharray="6 3""##;
const WORST_STYLE: &str = r##"stroke="red" stroke-width="1.5" stroke-dasharray="2 3""##;

/// Log error against log discount complexity: per-trial markers, per-discount
/// means, the least-squares line, and reference lines of slope `-λ` and `0`
/// through the first mean.
pub fn render_scaling_svg(rows: &[ExperimentRow], lambda: f64) -> Result<String> {
    let usable: Vec<&ExperimentRow> = rows.iter().filter(|r| r.log_err.is_finite()).collect();
    if usable.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let mut means: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for r in &usable {
        let e = means.entry(r.gamma.to_bits()).or_insert((r.log_complexity, 0.0, 0));
        e.1 += r.log_err;
        e.2 += 1;
    }
    let means: Vec<(f64, f64)> = means.values().map(|&(x, s, c)| (x, s / c as f64)).collect();
    let frame = Frame::new(usable.iter().map(|r| (r.log_complexity, r.log_err)));
    let mut out = String::new();
    header(&mut out, "Final error versus discount complexity", &frame, "log 1/(1-gamma)", "log error");
    let _ = writeln!(out, r##"<g fill="#9aa5b1" fill-opacity="0.5">"##);
    for r in &usable {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2"/>"#,
            frame.px(r.log_complexity),
            frame.py(r.log_err)
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r##"<g fill="#1f4e9c">"##);
    for &(x, y) in &means {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="5"/>"#, frame.px(x), frame.py(y));
    }
    let _ = writeln!(out, "</g>");

    let mut entries = Vec::new();
    if means.len() >= 2 {
        let fit = fit_loglog_slope(rows)?;
        frame.line(&mut out, 0.0, fit.intercept, fit.slope, FIT_STYLE);
        entries.push((FIT_STYLE, format!("least squares, slope {:.3}", fit.slope)));
    }
    let (x0, y0) = means[0];
    frame.line(&mut out, x0, y0, -lambda, LOWER_STYLE);
    entries.push((LOWER_STYLE, format!("instance lower bound, slope {:.2}", -lambda)));
    frame.line(&mut out, x0, y0, 0.0, WORST_STYLE);
    entries.push((WORST_STYLE, "worst case, slope 0".to_string()));
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Log error against samples used, with a dashed marker at each epoch start.
pub fn render_trace_svg(trace: &[TraceRow]) -> Result<String> {
    let usable: Vec<&TraceRow> = trace.iter().filter(|r| r.err_linf > 0.0 && r.err_linf.is_finite()).collect();
    if usable.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let frame = Frame::new(usable.iter().map(|r| (r.samples_used as f64, r.err_linf.ln())));
    let mut out = String::new();
    header(&mut out, "Error trace", &frame, "samples used", "log error");
    let mut epoch = None;
    for r in &usable {
        if epoch != Some(r.epoch) {
            epoch = Some(r.epoch);
            let x = frame.px(r.samples_used as f64);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#bbbbbb" stroke-dasharray="4 4"/>"##,
                HEIGHT - BOTTOM
            );
        }
    }
    let points: Vec<String> = usable
        .iter()
        .map(|r| format!("{:.2},{:.2}", frame.px(r.samples_used as f64), frame.py(r.err_linf.ln())))
        .collect();
    if points.len() == 1 {
        let _ = writeln!(out, r##"<circle cx="{}" r="3" fill="#1f4e9c"/>"##, points[0].replace(',', "\" cy=\""));
    } else {
        let _ = writeln!(
            out,
            r##"<polyline fill="none" stroke="#1f4e9c" stroke-width="1.2" points="{}"/>"##,
            points.join(" ")
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(gamma: f64, trial: usize, log_err: f64) -> ExperimentRow {
        ExperimentRow {
            gamma,
            n: 10,
            trial,
            err_linf: log_err.exp(),
            log_complexity: (1.0 / (1.0 - gamma)).ln(),
            log_err,
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(render_scaling_svg(&[], 0.5).is_err());
        assert!(render_trace_svg(&[]).is_err());
    }

    #[test]
    fn single_point_has_no_fit_line() {
        let svg = render_scaling_svg(&[row(0.9, 0, -2.0)], 0.5).unwrap();
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("least squares"));
        assert!(svg.contains("instance lower bound"));
        assert!(svg.contains("worst case"));
        assert_eq!(svg.matches(r#"r="5""#).count(), 1);
    }

    #[test]
    fn fit_and_reference_lines_are_drawn_deterministically() {
        let rows = vec![row(0.8, 0, -1.0), row(0.8, 1, -1.2), row(0.9, 0, -1.5), row(0.95, 0, -1.9)];
        let a = render_scaling_svg(&rows, 0.5).unwrap();
        let b = render_scaling_svg(&rows, 0.5).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("least squares"));
        assert!(a.contains("slope -0.50"));
        assert!(a.contains("slope 0"));
    }

    #[test]
    fn trace_marks_epochs() {
        let trace: Vec<TraceRow> = (0..20)
            .map(|i| TraceRow {
                epoch: 1 + i / 10,
                iter: (i % 10) as u64,
                samples_used: 100 + i as u64,
                err_linf: 1.0 / (1.0 + i as f64),
            })
            .collect();
        let svg = render_trace_svg(&trace).unwrap();
        assert_eq!(svg.matches("stroke-dasharray=\"4 4\"").count(), 2);
        assert!(svg.contains("<polyline"));
        assert_eq!(svg, render_trace_svg(&trace).unwrap());
    }
}
