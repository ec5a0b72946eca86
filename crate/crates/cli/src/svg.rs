//! Minimal static SVG plots.

use std::fmt::Write;

use nalgebra::DMatrix;

const CELL: f64 = 14.0;
const MARGIN: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grey-scale heatmap of coefficient magnitudes: darker is larger, white
/// is exactly zero. Rows are responses, columns predictors.
pub fn sparsity_heatmap(grid: &DMatrix<f64>, row_labels: &[String], lag_width: usize) -> String {
    let (r, c) = grid.shape();
    let width = 2.0 * MARGIN + c as f64 * CELL;
    let height = 2.0 * MARGIN + r as f64 * CELL;
    let max = grid.amax();
    let mut s = String::new();
    writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"##
    )
    .unwrap();
    writeln!(s, r##"<rect width="100%" height="100%" fill="white"/>"##).unwrap();
    for i in 0..r {
        for j in 0..c {
            let v = grid[(i, j)].abs();
            let shade = if max > 0.0 && v > 0.0 {
                (230.0 * (1.0 - v / max)).round() as u8
            } else {
                255
            };
            writeln!(
                s,
                r##"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},{shade})" stroke="#ddd" stroke-width="0.5"/>"##,
                MARGIN + j as f64 * CELL,
                MARGIN + i as f64 * CELL
            )
            .unwrap();
        }
    }
    if lag_width > 0 {
        let mut j = lag_width;
        while j < c {
            let x = MARGIN + j as f64 * CELL;
            writeln!(
                s,
                r##"<line x1="{x}" y1="{MARGIN}" x2="{x}" y2="{}" stroke="#c33" stroke-width="1"/>"##,
                MARGIN + r as f64 * CELL
            )
            .unwrap();
            j += lag_width;
        }
    }
    for (i, label) in row_labels.iter().enumerate().take(r) {
        writeln!(
            s,
            r##"<text x="{}" y="{}" font-size="10" text-anchor="end" font-family="sans-serif">{}</text>"##,
            MARGIN - 4.0,
            MARGIN + (i as f64 + 0.75) * CELL,
            escape(label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// MSFE against `log10 λ` with one-standard-error bars; the selected
/// penalty is drawn in red.
pub fn lambda_curve(points: &[(f64, f64, f64)], selected: usize) -> String {
    let (w, h) = (480.0, 320.0);
    let xs: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let lo: Vec<f64> = points.iter().map(|p| p.1 - p.2).collect();
    let hi: Vec<f64> = points.iter().map(|p| p.1 + p.2).collect();
    let fold = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
    let (x0, x1) = (fold(&xs, f64::min, f64::INFINITY), fold(&xs, f64::max, f64::NEG_INFINITY));
    let (y0, y1) = (fold(&lo, f64::min, f64::INFINITY), fold(&hi, f64::max, f64::NEG_INFINITY));
    let sx = |x: f64| {
        if x1 > x0 {
            MARGIN + (x - x0) / (x1 - x0) * (w - 2.0 * MARGIN)
        } else {
            w / 2.0
        }
    };
    let sy = |y: f64| {
        if y1 > y0 {
            h - MARGIN - (y - y0) / (y1 - y0) * (h - 2.0 * MARGIN)
        } else {
            h / 2.0
        }
    };
    let mut s = String::new();
    writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"##
    )
    .unwrap();
    writeln!(s, r##"<rect width="100%" height="100%" fill="white"/>"##).unwrap();
    writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{}" x2="{}" y2="{}" stroke="black"/>"##,
        h - MARGIN,
        w - MARGIN,
        h - MARGIN
    )
    .unwrap();
    writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{}" stroke="black"/>"##,
        h - MARGIN
    )
    .unwrap();
    let path: Vec<String> = points
        .iter()
        .zip(&xs)
        .map(|(p, x)| format!("{:.2},{:.2}", sx(*x), sy(p.1)))
        .collect();
    writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"##,
        path.join(" ")
    )
    .unwrap();
    for (i, (p, x)) in points.iter().zip(&xs).enumerate() {
        let colour = if i == selected { "#c33" } else { "steelblue" };
        writeln!(
            s,
            r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{colour}"/>"##,
            sx(*x),
            sy(p.1 - p.2),
            sy(p.1 + p.2)
        )
        .unwrap();
        writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"##,
            sx(*x),
            sy(p.1)
        )
        .unwrap();
    }
    writeln!(
        s,
        r##"<text x="{}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">log10 lambda</text>"##,
        w / 2.0,
        h - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r##"<text x="12" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 12 {})">MSFE</text>"##,
        h / 2.0,
        h / 2.0
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}
