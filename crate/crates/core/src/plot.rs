//! Minimal hand-written SVG charts.

use std::fmt::Write;

use crate::harness::{CellResult, RunRecord};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Mean and 95% normal half-width (`1.96 * stderr`) of a sample.
pub fn band(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPoint {
    pub iteration: u32,
    pub mean: f64,
    pub half_width: f64,
}

/// Per evaluation iteration, the band across seeds. Iterations missing from
/// any seed are dropped.
pub fn robustness_bands(runs: &[Vec<RunRecord>]) -> Vec<BandPoint> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .iter()
        .filter(|r| r.robustness.is_some())
        .filter_map(|r| {
            let values: Option<Vec<f64>> = runs
                .iter()
                .map(|run| {
                    run.iter()
                        .find(|x| x.iteration == r.iteration)
                        .and_then(|x| x.robustness)
                })
                .collect();
            let (mean, half_width) = band(&values?);
            Some(BandPoint {
                iteration: r.iteration,
                mean,
                half_width,
            })
        })
        .collect()
}

/// Cell-wise mean over seeds. Grids must share the same cell order.
pub fn average_grids(grids: &[Vec<CellResult>]) -> Vec<CellResult> {
    let n = grids.len() as f64;
    grids[0]
        .iter()
        .enumerate()
        .map(|(i, c)| CellResult {
            mean_return: grids.iter().map(|g| g[i].mean_return).sum::<f64>() / n,
            ..*c
        })
        .collect()
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#,
        WIDTH / 2.0
    );
}

fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

/// Line chart of robustness against iteration with a shaded band.
pub fn robustness_svg(points: &[BandPoint]) -> String {
    let mut out = String::new();
    header(&mut out, "Robustness vs iteration");
    if points.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let x_lo = f64::from(points[0].iteration);
    let x_hi = f64::from(points[points.len() - 1].iteration);
    let y_lo = points
        .iter()
        .map(|p| p.mean - p.half_width)
        .fold(f64::INFINITY, f64::min);
    let y_hi = points
        .iter()
        .map(|p| p.mean + p.half_width)
        .fold(f64::NEG_INFINITY, f64::max);
    let px = |it: u32| scale(f64::from(it), x_lo, x_hi, MARGIN, WIDTH - MARGIN);
    let py = |v: f64| scale(v, y_lo, y_hi, HEIGHT - MARGIN, MARGIN);

    let mut band = String::new();
    for p in points {
        let _ = write!(band, "{:.2},{:.2} ", px(p.iteration), py(p.mean + p.half_width));
    }
    for p in points.iter().rev() {
        let _ = write!(band, "{:.2},{:.2} ", px(p.iteration), py(p.mean - p.half_width));
    }
    let _ = writeln!(
        out,
        r#"<polygon points="{}" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#,
        band.trim_end()
    );
    let line: Vec<String> = points
        .iter()
        .map(|p| format!("{:.2},{:.2}", px(p.iteration), py(p.mean)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        line.join(" ")
    );

    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{l}" y="{}" text-anchor="middle">{x_lo}</text>"#,
        b + 16.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{r}" y="{}" text-anchor="middle">{x_hi}</text>"#,
        b + 16.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">{y_lo:.1}</text>"#,
        l - 4.0,
        b
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">{y_hi:.1}</text>"#,
        l - 4.0,
        t + 4.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    out.push_str("</svg>\n");
    out
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Heatmap of mean return over the mass x friction grid.
pub fn heatmap_svg(cells: &[CellResult]) -> String {
    let mut out = String::new();
    header(&mut out, "Return over mass and friction scales");
    if cells.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let masses = sorted_unique(cells.iter().map(|c| c.mass_scale).collect());
    let frictions = sorted_unique(cells.iter().map(|c| c.friction_scale).collect());
    let lo = cells.iter().map(|c| c.mean_return).fold(f64::INFINITY, f64::min);
    let hi = cells.iter().map(|c| c.mean_return).fold(f64::NEG_INFINITY, f64::max);
    let cw = (WIDTH - 2.0 * MARGIN) / masses.len() as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / frictions.len() as f64;
    for c in cells {
        let i = masses.iter().position(|&m| m == c.mass_scale).unwrap_or(0);
        let j = frictions.iter().position(|&f| f == c.friction_scale).unwrap_or(0);
        let t = scale(c.mean_return, lo, hi, 0.0, 1.0);
        // white (low) to dark blue (high)
        let (r, g, b) = (
            (255.0 * (1.0 - 0.8 * t)) as u8,
            (255.0 * (1.0 - 0.6 * t)) as u8,
            (255.0 - 80.0 * t) as u8,
        );
        let x = MARGIN + i as f64 * cw;
        let y = HEIGHT - MARGIN - (j + 1) as f64 * ch;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="rgb({r},{g},{b})" stroke="white"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{:.1}</text>"#,
            x + cw / 2.0,
            y + ch / 2.0 + 4.0,
            c.mean_return
        );
    }
    for (i, m) in masses.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{m}</text>"#,
            MARGIN + (i as f64 + 0.5) * cw,
            HEIGHT - MARGIN + 16.0
        );
    }
    for (j, f) in frictions.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{f}</text>"#,
            MARGIN - 4.0,
            HEIGHT - MARGIN - (j as f64 + 0.5) * ch + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">mass scale</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">friction scale</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    out.push_str("</svg>\n");
    out
}
