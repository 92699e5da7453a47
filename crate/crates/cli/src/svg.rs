//! Single-polyline SVG plots. Points are written in data coordinates inside
//! a y-flipped group, so the file carries the plotted values directly.

use std::fmt::Write;

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
}

pub fn polyline(plot: &Plot, pts: &[(f64, f64)]) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let w = (x1 - x0).max(1e-9);
    let h = (y1 - y0).max(1e-9);
    let pad = 0.08;
    let (vx, vy, vw, vh) = (x0 - pad * w, -(y1 + pad * h), w * (1.0 + 2.0 * pad), h * (1.0 + 2.0 * pad));
    let stroke = 0.004 * vw.max(vh);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="480" viewBox="{vx:.6} {vy:.6} {vw:.6} {vh:.6}" preserveAspectRatio="none">"#).unwrap();
    writeln!(s, "<title>{}</title>", plot.title).unwrap();
    writeln!(s, "<desc>x: {}; y: {}</desc>", plot.x_label, plot.y_label).unwrap();
    let body: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.6},{y:.6}")).collect();
    writeln!(s, r#"<g transform="scale(1,-1)">"#).unwrap();
    writeln!(s, r#"<polyline fill="none" stroke="black" stroke-width="{stroke:.6}" points="{}"/>"#, body.join(" ")).unwrap();
    s.push_str("</g>\n</svg>\n");
    s
}

/// Reads back the polyline points of a file written by [`polyline`].
#[cfg(test)]
pub fn read_points(svg: &str) -> Vec<(f64, f64)> {
    let Some(start) = svg.find("points=\"") else { return Vec::new() };
    let rest = &svg[start + 8..];
    let body = &rest[..rest.find('"').unwrap_or(rest.len())];
    body.split_whitespace()
        .filter_map(|p| {
            let (x, y) = p.split_once(',')?;
            Some((x.parse().ok()?, y.parse().ok()?))
        })
        .collect()
}
