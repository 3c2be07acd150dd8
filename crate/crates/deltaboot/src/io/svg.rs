//! Static SVG renderings: the sigma-vs-sigma scatter with its fitted line,
//! and sweep curves with shaded spread bands. Output is a pure function of
//! the input values, so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::compare::{RegressionResult, SweepAxis, SweepSummary, UncertaintyTable};
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 56.0;
const TICKS: usize = 5;

/// Which sweep quantity to plot on the y axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMetric {
    RSquared,
    Beta,
    MaxEpsilon,
}

struct Frame {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn new(xs: &[f64], ys: &[f64]) -> Frame {
        let (xmin, xmax) = padded(extent(xs));
        let (ymin, ymax) = padded(extent(ys));
        Frame {
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.xmin) / (self.xmax - self.xmin) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.ymin) / (self.ymax - self.ymin) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn extent(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn padded((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && v.abs() < 5e-4 {
        format!("{v:.1e}")
    } else {
        format!("{v:.4}")
    }
}

fn open_svg(out: &mut String, title: &str) {
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )
    .expect("string write");
    writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>").expect("string write");
    writeln!(
        out,
        "<text x=\"{:.2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" \
         text-anchor=\"middle\">{title}</text>",
        WIDTH / 2.0
    )
    .expect("string write");
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    writeln!(
        out,
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>"
    )
    .expect("string write");
    writeln!(
        out,
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" stroke=\"black\"/>"
    )
    .expect("string write");
    for i in 0..TICKS {
        let t = i as f64 / (TICKS - 1) as f64;
        let xv = frame.xmin + t * (frame.xmax - frame.xmin);
        let yv = frame.ymin + t * (frame.ymax - frame.ymin);
        let xp = frame.px(xv);
        let yp = frame.py(yv);
        writeln!(
            out,
            "<line x1=\"{xp:.2}\" y1=\"{y0:.2}\" x2=\"{xp:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            y0 + 5.0
        )
        .expect("string write");
        writeln!(
            out,
            "<text x=\"{xp:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>",
            y0 + 18.0,
            fmt_tick(xv)
        )
        .expect("string write");
        writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{yp:.2}\" x2=\"{x0:.2}\" y2=\"{yp:.2}\" stroke=\"black\"/>",
            x0 - 5.0
        )
        .expect("string write");
        writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>",
            x0 - 8.0,
            yp + 4.0,
            fmt_tick(yv)
        )
        .expect("string write");
    }
    writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{x_label}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    )
    .expect("string write");
    writeln!(
        out,
        "<text x=\"18\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{y_label}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    )
    .expect("string write");
}

/// Scatter of paired uncertainties with the least-squares line drawn through
/// them and the fit constants annotated to four decimal places.
pub fn scatter_svg(table: &UncertaintyTable, fit: &RegressionResult) -> Result<String> {
    if table.rows.is_empty() {
        return Err(Error::InsufficientData { need: 1, got: 0 });
    }
    let xs: Vec<f64> = table.rows.iter().map(|r| r.sigma_delta).collect();
    let ys: Vec<f64> = table.rows.iter().map(|r| r.sigma_boot).collect();
    let frame = Frame::new(&xs, &ys);
    let title = format!(
        "{} B={} K={} rep {}",
        table.meta.dataset, table.meta.b, table.meta.k, table.meta.rep
    );
    let mut out = String::new();
    open_svg(&mut out, &title);
    axes(&mut out, &frame, "\u{3c3}_delta", "\u{3c3}_boot");
    for (&x, &y) in xs.iter().zip(&ys) {
        writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"#4682b4\" fill-opacity=\"0.6\"/>",
            frame.px(x),
            frame.py(y)
        )
        .expect("string write");
    }
    let (fx0, fx1) = (frame.xmin, frame.xmax);
    writeln!(
        out,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#c03030\" \
         stroke-width=\"1.5\"/>",
        frame.px(fx0),
        frame.py(fit.alpha + fit.beta * fx0),
        frame.px(fx1),
        frame.py(fit.alpha + fit.beta * fx1)
    )
    .expect("string write");
    writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\">\
         \u{3b1}={:.4} \u{3b2}={:.4} R\u{b2}={:.4} max \u{3b5}={:.4}</text>",
        MARGIN_LEFT + 8.0,
        MARGIN_TOP + 14.0,
        fit.alpha,
        fit.beta,
        fit.r_squared,
        fit.max_epsilon
    )
    .expect("string write");
    writeln!(out, "</svg>").expect("string write");
    Ok(out)
}

/// One sweep curve: per-value means with a shaded band of twice the
/// between-repetition standard deviation (bandless for the epsilon curve,
/// which is a worst-case bound rather than an average).
pub fn sweep_svg(summary: &SweepSummary, metric: SweepMetric) -> Result<String> {
    if summary.points.is_empty() {
        return Err(Error::InsufficientData { need: 1, got: 0 });
    }
    let xs: Vec<f64> = summary.points.iter().map(|p| p.value as f64).collect();
    let (means, bands): (Vec<f64>, Vec<f64>) = summary
        .points
        .iter()
        .map(|p| match metric {
            SweepMetric::RSquared => (p.r_squared_mean, p.r_squared_band),
            SweepMetric::Beta => (p.beta_mean, p.beta_band),
            SweepMetric::MaxEpsilon => (p.max_epsilon, 0.0),
        })
        .unzip();
    let mut y_extent: Vec<f64> = Vec::with_capacity(2 * means.len());
    for (&m, &b) in means.iter().zip(&bands) {
        y_extent.push(m - b);
        y_extent.push(m + b);
    }
    let frame = Frame::new(&xs, &y_extent);
    let x_label = match summary.axis {
        SweepAxis::K => "K",
        SweepAxis::B => "B",
    };
    let y_label = match metric {
        SweepMetric::RSquared => "R\u{b2}",
        SweepMetric::Beta => "\u{3b2}",
        SweepMetric::MaxEpsilon => "max \u{3b5}",
    };
    let mut out = String::new();
    open_svg(&mut out, &format!("{y_label} vs {x_label}"));
    axes(&mut out, &frame, x_label, y_label);
    if bands.iter().any(|&b| b > 0.0) {
        let mut pts = String::new();
        for ((&x, &m), &b) in xs.iter().zip(&means).zip(&bands) {
            write!(pts, "{:.2},{:.2} ", frame.px(x), frame.py(m + b)).expect("string write");
        }
        for ((&x, &m), &b) in xs.iter().zip(&means).zip(&bands).rev() {
            write!(pts, "{:.2},{:.2} ", frame.px(x), frame.py(m - b)).expect("string write");
        }
        writeln!(
            out,
            "<polygon points=\"{}\" fill=\"#b0c4de\" fill-opacity=\"0.5\"/>",
            pts.trim_end()
        )
        .expect("string write");
    }
    let mut line = String::new();
    for (&x, &m) in xs.iter().zip(&means) {
        write!(line, "{:.2},{:.2} ", frame.px(x), frame.py(m)).expect("string write");
    }
    writeln!(
        out,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#2f4f4f\" stroke-width=\"1.5\"/>",
        line.trim_end()
    )
    .expect("string write");
    for (&x, &m) in xs.iter().zip(&means) {
        writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#2f4f4f\"/>",
            frame.px(x),
            frame.py(m)
        )
        .expect("string write");
    }
    let last = summary.points.last().expect("non-empty");
    let annotation = format!(
        "{y_label}({x_label}={})={:.4}",
        last.value,
        *means.last().expect("non-empty")
    );
    writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\">{annotation}</text>",
        MARGIN_LEFT + 8.0,
        MARGIN_TOP + 14.0
    )
    .expect("string write");
    writeln!(out, "</svg>").expect("string write");
    Ok(out)
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg)?;
    Ok(())
}
