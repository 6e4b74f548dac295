//! SVG scatter of forgetting frequency against log-scaled confidence variance.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

/// One point per sample at `(log10 V, F)`; `selected` samples are drawn last,
/// in red. Zero variances sit on the left edge.
pub fn scatter_svg(v: &[f64], f: &[f64], selected: &[usize], title: &str) -> String {
    let floor = v
        .iter()
        .copied()
        .filter(|&x| x > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1e-12 };
    let logv: Vec<f64> = v.iter().map(|&x| x.max(floor).log10()).collect();
    let mut lo = logv.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let mut hi = logv.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil();
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let px = |x: f64| MARGIN + (x - lo) / (hi - lo) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - y * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, x1, y0, y1) = (px(lo), px(hi), py(0.0), py(1.0));
    let _ = writeln!(s, r#"<path d="M{x0:.1} {y1:.1}V{y0:.1}H{x1:.1}" fill="none" stroke="black"/>"#);
    for d in (lo as i64)..=(hi as i64) {
        let x = px(d as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{d}</text>"#,
            y0 + 5.0,
            y0 + 20.0
        );
    }
    for q in 0..=4 {
        let y = py(q as f64 / 4.0);
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            q as f64 / 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">confidence variance V (log scale)</text>"#, WIDTH / 2.0, HEIGHT - 14.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">forgetting frequency F</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    let mut is_selected = vec![false; v.len()];
    for &i in selected {
        is_selected[i] = true;
    }
    let _ = writeln!(s, r##"<g fill="#8c8c8c" fill-opacity="0.5">"##);
    for i in (0..v.len()).filter(|&i| !is_selected[i]) {
        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="1.5"/>"#, px(logv[i]), py(f[i]));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g fill="#d62728">"##);
    for &i in selected {
        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5"/>"#, px(logv[i]), py(f[i]));
    }
    let _ = writeln!(s, "</g>\n</svg>");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_every_point_once() {
        let v = [0.0, 1e-3, 10.0, 2.0];
        let f = [0.0, 1.0, 0.5, 0.25];
        let svg = scatter_svg(&v, &f, &[2, 0], "a <b>");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 4);
        assert_eq!(svg.matches(r#"r="2.5""#).count(), 2);
        assert!(svg.contains("a &lt;b&gt;"));
        assert_eq!(svg, scatter_svg(&v, &f, &[2, 0], "a <b>"));
    }

    #[test]
    fn degenerate_inputs() {
        let svg = scatter_svg(&[0.0, 0.0], &[0.0, 1.0], &[], "flat");
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        assert!(scatter_svg(&[], &[], &[], "empty").contains("</svg>"));
    }
}
