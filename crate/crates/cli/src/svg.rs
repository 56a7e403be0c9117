use std::fmt::Write as _;

use prostapipe::metrics::RocCurve;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Self-contained SVG: axes, chance diagonal, the curve as a polyline and an AUC label.
pub fn roc_svg(curve: &RocCurve, auc: f64) -> String {
    let plot = SIZE - 2.0 * MARGIN;
    let px = |fpr: f64| MARGIN + fpr * plot;
    let py = |tpr: f64| SIZE - MARGIN - tpr * plot;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let (x0, y0, x1, y1) = (px(0.0), py(0.0), px(1.0), py(1.0));
    let _ = writeln!(s, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="gray" stroke-dasharray="4 4"/>"#);
    let points: Vec<String> = curve.points().iter().map(|&(f, t)| format!("{:.2},{:.2}", px(f), py(t))).collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, points.join(" "));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">False positive rate</text>"#, SIZE / 2.0, SIZE - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 15 {})">True positive rate</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" font-size="14">AUC = {auc:.4}</text>"#, x1 - 10.0, y0 - 10.0);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_corners_map_to_plot_corners() {
        let curve = RocCurve::new(vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]).unwrap();
        let svg = roc_svg(&curve, 1.0);
        assert!(svg.contains(r#"points="50.00,350.00 50.00,50.00 350.00,50.00""#));
        assert!(svg.contains("AUC = 1.0000"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}
