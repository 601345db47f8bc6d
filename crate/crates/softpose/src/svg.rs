//! Minimal SVG line plot of a refinement trace.

use std::fmt::Write;

use softpose_core::optim::Trace;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;

/// Total loss and, when known, rotation error against iteration, each scaled to its own maximum.
pub fn trace_svg(trace: &Trace) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" stroke="black" fill="none"/>"#);
    let last_iter = trace.records.last().map_or(1, |r| r.iter.max(1)) as f64;
    let series: [(&str, &str, Vec<(usize, f64)>); 2] = [
        ("total loss", "#1f77b4", trace.records.iter().map(|r| (r.iter, r.total)).collect()),
        ("rotation error", "#d62728", trace.records.iter().filter_map(|r| r.rot_err_deg.map(|e| (r.iter, e))).collect()),
    ];
    for (k, (label, color, pts)) in series.iter().enumerate() {
        let max = pts.iter().map(|p| p.1).fold(0.0f64, f64::max);
        if pts.is_empty() || !(max > 0.0 && max.is_finite()) {
            continue;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(i, v)| {
                let x = x0 + (x1 - x0) * i as f64 / last_iter;
                let y = y0 - (y0 - y1) * v / max;
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" fill="none"/>"#, coords.join(" "));
        let ly = MARGIN - 20.0 + 14.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{label} (max {max:.4})</text>"#, x1 - 180.0);
    }
    let _ = writeln!(s, r#"<text x="{x1}" y="{}" font-size="11" text-anchor="end">iteration {last_iter}</text>"#, HEIGHT - 12.0);
    s.push_str("</svg>\n");
    s
}
