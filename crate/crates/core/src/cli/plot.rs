//! Static SVG line charts of VaR forecasts against realized losses.

use std::fmt::Write as _;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Realized losses as bars and one polyline per model.
pub fn var_chart(title: &str, dates: &[String], realized: &[f64], models: &[(String, Vec<f64>)]) -> String {
    let all = realized.iter().chain(models.iter().flat_map(|(_, v)| v.iter()));
    let (mut lo, mut hi) = all.fold((0.0f64, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo <= 0.0 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    let n = realized.len().max(2);
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n - 1) as f64;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black" stroke-width="0.5"/>"#,
        y0 = y(0.0),
        x1 = WIDTH - MARGIN
    );
    for v in [lo + pad, hi - pad] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.4}</text>"#,
            MARGIN - 4.0,
            y(v)
        );
    }
    if let (Some(first), Some(last)) = (dates.first(), dates.last()) {
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="10">{}</text>"#,
            HEIGHT - MARGIN + 16.0,
            escape(first)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            WIDTH - MARGIN,
            HEIGHT - MARGIN + 16.0,
            escape(last)
        );
    }
    for (i, &r) in realized.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<line x1="{xi:.2}" y1="{y0:.2}" x2="{xi:.2}" y2="{yr:.2}" stroke="#7f7f7f" stroke-width="1"/>"##,
            xi = x(i),
            y0 = y(0.0),
            yr = y(r)
        );
    }
    for (k, (name, values)) in models.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = 36.0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 140.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_well_formed() {
        let svg = var_chart(
            "VaR <0.95>",
            &["2020-01-02".into(), "2020-01-03".into()],
            &[0.01, -0.02],
            &[("day".into(), vec![0.03, 0.031])],
        );
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("&lt;0.95&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}
