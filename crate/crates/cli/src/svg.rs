//! Scatter plots of the first two embedding axes.

use std::fmt::Write;

use dipole::Embedding;

use crate::{CliError, CliResult};

const CANVAS: f64 = 800.0;
const MARGIN: f64 = 0.05;
const DEFAULT_FILL: [u8; 3] = [31, 119, 180];
const LOW: [f64; 3] = [68.0, 1.0, 84.0];
const HIGH: [f64; 3] = [253.0, 231.0, 37.0];

fn channel(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (x - lo) / (hi - lo)
    } else {
        0.5
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// One column is a scalar mapped onto a two-color ramp; three columns are
/// RGB channels, each rescaled to its own range.
pub fn colors_from_rows(rows: &[Vec<f64>]) -> CliResult<Vec<[u8; 3]>> {
    let width = rows.first().map_or(0, Vec::len);
    match width {
        1 => {
            let (lo, hi) = range(rows.iter().map(|r| r[0]));
            Ok(rows
                .iter()
                .map(|r| {
                    let s = channel(r[0], lo, hi);
                    let mix = |c: usize| (LOW[c] + s * (HIGH[c] - LOW[c])).round() as u8;
                    [mix(0), mix(1), mix(2)]
                })
                .collect())
        }
        3 => {
            let ranges: Vec<(f64, f64)> = (0..3).map(|c| range(rows.iter().map(|r| r[c]))).collect();
            Ok(rows
                .iter()
                .map(|r| {
                    let v = |c: usize| (255.0 * channel(r[c], ranges[c].0, ranges[c].1)).round() as u8;
                    [v(0), v(1), v(2)]
                })
                .collect())
        }
        w => Err(CliError::Input(format!("color file needs 1 or 3 columns, found {w}"))),
    }
}

/// Self-contained SVG with one circle per point. The view box fits the data
/// with a 5% margin; the vertical axis points up.
pub fn emit_svg(embedding: &Embedding, colors: Option<&[[u8; 3]]>) -> CliResult<String> {
    if embedding.dim() < 2 {
        return Err(CliError::Input(format!("plotting needs at least 2 axes, embedding has {}", embedding.dim())));
    }
    if let Some(c) = colors {
        if c.len() != embedding.len() {
            return Err(CliError::Input(format!("{} colors given for {} points", c.len(), embedding.len())));
        }
    }
    let n = embedding.len();
    let (x_lo, x_hi) = range((0..n).map(|i| embedding.point(i)[0]));
    let (y_lo, y_hi) = range((0..n).map(|i| -embedding.point(i)[1]));
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = (span(x_lo, x_hi), span(y_lo, y_hi));
    let (min_x, min_y) = (x_lo - MARGIN * w, y_lo - MARGIN * h);
    let (view_w, view_h) = ((1.0 + 2.0 * MARGIN) * w, (1.0 + 2.0 * MARGIN) * h);
    let radius = 0.004 * view_w.max(view_h);
    let scale = CANVAS / view_w.max(view_h);

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="{} {} {} {}">"#,
        view_w * scale,
        view_h * scale,
        num(min_x),
        num(min_y),
        num(view_w),
        num(view_h)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="white"/>"#,
        num(min_x),
        num(min_y),
        num(view_w),
        num(view_h)
    );
    for i in 0..n {
        let p = embedding.point(i);
        let [r, g, b] = colors.map_or(DEFAULT_FILL, |c| c[i]);
        let _ = writeln!(
            out,
            r##"<circle cx="{}" cy="{}" r="{}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
            num(p[0]),
            num(-p[1]),
            num(radius)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn num(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}
