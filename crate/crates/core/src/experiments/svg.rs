//! Minimal static SVG output. Coordinates are printed with fixed precision
//! so identical inputs give identical bytes.

use std::fmt::Write;

use super::phase::{BoundaryFit, HeatmapGrid};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn header(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Gray level for a frequency: 0 → white (255), 1 → black (0).
pub fn gray_level(freq: f64) -> u8 {
    (255.0 * (1.0 - freq.clamp(0.0, 1.0))).round() as u8
}

/// One rectangle per cell, shaded by convergence frequency, with the fitted
/// boundary drawn as a polyline.
pub fn heatmap(grid: &HeatmapGrid, fit: Option<&BoundaryFit>) -> String {
    let mut s = String::new();
    header(&mut s, &format!("Convergence frequency over (k, {})", grid.x_label));
    let (nx, ny) = (grid.x.len().max(1) as f64, grid.k.len().max(1) as f64);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let cw = pw / nx;
    let ch = ph / ny;
    for (row, k) in grid.k.iter().enumerate() {
        let y = TOP + ph - (row as f64 + 1.0) * ch;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{k}</text>"#,
            LEFT - 6.0,
            y + ch / 2.0 + 4.0
        );
        for col in 0..grid.x.len() {
            let g = gray_level(grid.frequency(row, col));
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({g},{g},{g})" stroke="#888" stroke-width="0.5"/>"##,
                LEFT + col as f64 * cw,
                y,
                cw,
                ch
            );
        }
    }
    for (col, x) in grid.x.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            LEFT + (col as f64 + 0.5) * cw,
            TOP + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 18.0,
        escape(&grid.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">k</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    if let (Some(fit), false) = (fit, grid.k.is_empty() || grid.x.is_empty()) {
        // Cell centres are evenly spaced; map k onto the row index axis by
        // piecewise-linear interpolation between row values.
        let k_to_y = |k: f64| -> Option<f64> {
            let ks: Vec<f64> = grid.k.iter().map(|&v| v as f64).collect();
            if k < ks[0] || k > ks[ks.len() - 1] {
                return None;
            }
            let i = ks.iter().position(|&v| v >= k).unwrap_or(ks.len() - 1);
            let pos = if i == 0 {
                0.0
            } else {
                (i - 1) as f64 + (k - ks[i - 1]) / (ks[i] - ks[i - 1])
            };
            Some(TOP + ph - (pos + 0.5) * ch)
        };
        let x_to_px = |x: f64| -> f64 {
            let xs: Vec<f64> = grid.x.iter().map(|&v| v as f64).collect();
            let i = xs.iter().position(|&v| v >= x).unwrap_or(xs.len() - 1);
            let pos = if i == 0 || xs.len() == 1 {
                0.0
            } else {
                (i - 1) as f64 + (x - xs[i - 1]) / (xs[i] - xs[i - 1])
            };
            LEFT + (pos + 0.5) * cw
        };
        let (x0, x1) = (grid.x[0] as f64, grid.x[grid.x.len() - 1] as f64);
        let pts: Vec<String> = (0..=100)
            .map(|i| x0 + (x1 - x0) * i as f64 / 100.0)
            .filter_map(|x| k_to_y(fit.eval(x)).map(|y| format!("{:.2},{:.2}", x_to_px(x), y)))
            .collect();
        if pts.len() >= 2 {
            let _ = writeln!(
                s,
                r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
                pts.join(" ")
            );
        }
    }
    // Legend.
    let lx = WIDTH - RIGHT + 20.0;
    for (i, f) in [0.0, 0.5, 1.0].iter().enumerate() {
        let g = gray_level(*f);
        let y = TOP + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r##"<rect x="{lx:.2}" y="{y:.2}" width="14" height="14" fill="rgb({g},{g},{g})" stroke="#888"/>"##
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{f:.1}</text>"#, lx + 20.0, y + 11.0);
    }
    s.push_str("</svg>\n");
    s
}

/// A named series for [`line_plot`].
#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

/// Axis scaling for [`line_plot`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

/// Line chart with a legend. Non-finite points (and non-positive ones on a
/// log axis) are dropped.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    x_scale: Scale,
    y_scale: Scale,
    series: &[Series],
) -> String {
    let tx = |v: f64| if x_scale == Scale::Log { v.log10() } else { v };
    let ty = |v: f64| if y_scale == Scale::Log { v.log10() } else { v };
    let ok = |(x, y): (f64, f64)| {
        x.is_finite()
            && y.is_finite()
            && (x_scale == Scale::Linear || x > 0.0)
            && (y_scale == Scale::Linear || y > 0.0)
    };
    let kept: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .copied()
                .filter(|&p| ok(p))
                .map(|(x, y)| (tx(x), ty(y)))
                .collect()
        })
        .collect();
    let all = kept.iter().flatten();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if xmin > xmax {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    if xmax - xmin < 1e-12 {
        xmax = xmin + 1.0;
    }
    if ymax - ymin < 1e-12 {
        ymax = ymin + 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * pw;
    let py = |y: f64| TOP + ph - (y - ymin) / (ymax - ymin) * ph;

    let mut s = String::new();
    header(&mut s, title);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let label = |v: f64, scale: Scale| {
        if scale == Scale::Log {
            format!("1e{v:.1}")
        } else {
            format!("{v:.3e}")
        }
    };
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = xmin + f * (xmax - xmin);
        let yv = ymin + f * (ymax - ymin);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
            px(xv),
            TOP + ph + 14.0,
            label(xv, x_scale)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#,
            LEFT - 4.0,
            py(yv) + 3.0,
            label(yv, y_scale)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (i, (ser, pts)) in series.iter().zip(&kept).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if ser.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        if !pts.is_empty() {
            let coords: Vec<String> = pts
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                coords.join(" ")
            );
        }
        let ly = TOP + 16.0 * i as f64 + 8.0;
        let lx = WIDTH - RIGHT + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            lx + 25.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}
