//! Minimal deterministic SVG charts.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 2] = ["#1f77b4", "#d62728"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| if hi - lo > 1e-12 { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Self { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn open(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<title>{title}</title>"#);
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r##"<g class="axes" stroke="#333333"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"##
    );
    for (v, anchor) in [(f.x.0, "start"), (f.x.1, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}">{v:.3}</text>"#,
            f.px(v),
            y0 + 16.0
        );
    }
    for v in [f.y.0, f.y.1] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            x0 - 6.0,
            f.py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{ylabel}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
}

/// Scatter of `(x, y, class)` points, one colored series per class, with a legend.
pub fn scatter_svg(points: &[(f64, f64, u8)], title: &str) -> String {
    let f = Frame::new(range(points.iter().map(|p| p.0)), range(points.iter().map(|p| p.1)));
    let mut s = String::new();
    open(&mut s, title);
    axes(&mut s, &f, "PC1", "PC2");
    let mut classes: Vec<u8> = points.iter().map(|p| p.2).collect();
    classes.sort_unstable();
    classes.dedup();
    for (k, class) in classes.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(s, r#"<g class="series" id="class-{class}" fill="{color}" fill-opacity="0.6">"#);
        for p in points.iter().filter(|p| p.2 == *class) {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, f.px(p.0), f.py(p.1));
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, r#"<g class="legend">"#);
    for (k, class) in classes.iter().enumerate() {
        let y = MARGIN + 18.0 * k as f64;
        let name = match class {
            0 => "base (0)".to_string(),
            1 => "target (1)".to_string(),
            c => format!("class {c}"),
        };
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{name}</text>"#,
            WIDTH - MARGIN - 90.0,
            y - 9.0,
            COLORS[k % COLORS.len()],
            WIDTH - MARGIN - 74.0,
            y
        );
    }
    let _ = writeln!(s, "</g>\n</svg>");
    s
}

/// Score curve over `α` with a horizontal rule at the boundary.
pub fn trace_svg(points: &[(f64, f64)], boundary: f64, title: &str) -> String {
    let (lo, hi) = range(points.iter().map(|p| p.1).chain([boundary]));
    let f = Frame::new(range(points.iter().map(|p| p.0)), (lo.min(0.0), hi.max(1.0)));
    let mut s = String::new();
    open(&mut s, title);
    axes(&mut s, &f, "alpha", "f(x)");
    let y = f.py(boundary);
    let _ = writeln!(
        s,
        r##"<line class="boundary" x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#888888" stroke-dasharray="6 4"/>"##,
        WIDTH - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">T = {boundary}</text>"#,
        WIDTH - MARGIN,
        y - 6.0
    );
    let path: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", f.px(p.0), f.py(p.1))).collect();
    let _ = writeln!(
        s,
        r#"<polyline class="series" points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
        path.join(" "),
        COLORS[0]
    );
    let _ = writeln!(s, "</svg>");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_ranges_still_render() {
        let s = scatter_svg(&[(1.0, 1.0, 0), (1.0, 1.0, 1)], "t");
        assert!(!s.contains("NaN"));
        let s = trace_svg(&[(0.0, 0.2)], 0.5, "t");
        assert!(!s.contains("NaN"));
    }
}
