//! Static SVG line charts with the plotted numbers embedded as a table.

use std::fmt::Write as _;

/// A named line of `(x, mean, stderr)` points.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 55.0;
const LEGEND_W: f64 = 170.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

/// One panel per entry of `panels`, laid out left to right, sharing a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, panels: &[Panel]) -> String {
    let width = MARGIN + panels.len().max(1) as f64 * (PANEL_W + MARGIN) + LEGEND_W;
    let height = PANEL_H + 2.5 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(title));

    // plotted numbers, one line per point
    let _ = writeln!(svg, "<desc>panel,series,x,mean,stderr");
    for p in panels {
        for s in &p.series {
            for (x, m, e) in &s.points {
                let _ = writeln!(svg, "{},{},{x},{m},{e}", escape(&p.title), escape(&s.name));
            }
        }
    }
    let _ = writeln!(svg, "</desc>");
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        width / 2.0,
        escape(title)
    );

    let mut names: Vec<&str> = Vec::new();
    for s in panels.iter().flat_map(|p| &p.series) {
        if !names.contains(&s.name.as_str()) {
            names.push(&s.name);
        }
    }
    let color = |name: &str| COLORS[names.iter().position(|n| *n == name).unwrap_or(0) % COLORS.len()];

    for (i, panel) in panels.iter().enumerate() {
        let left = MARGIN + i as f64 * (PANEL_W + MARGIN);
        let top = 1.5 * MARGIN;
        let pts = || panel.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = extent(pts().map(|p| p.0));
        let (y0, y1) = extent(pts().flat_map(|p| [p.1 - p.2, p.1 + p.2]));
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * PANEL_W;
        let sy = |y: f64| top + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;

        let _ = writeln!(
            svg,
            r#"<rect x="{left}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + PANEL_W / 2.0,
            top - 8.0,
            escape(&panel.title)
        );
        for t in 0..=4 {
            let frac = t as f64 / 4.0;
            let (xv, yv) = (x0 + frac * (x1 - x0), y0 + frac * (y1 - y0));
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{:.4}</text>"#,
                sx(xv),
                top + PANEL_H + 14.0,
                xv
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{:.4}</text>"#,
                left - 4.0,
                sy(yv) + 3.0,
                yv
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + PANEL_W / 2.0,
            top + PANEL_H + 32.0,
            escape(x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate({},{}) rotate(-90)" text-anchor="middle">{}</text>"#,
            left - 42.0,
            top + PANEL_H / 2.0,
            escape(y_label)
        );
        for s in &panel.series {
            let c = color(&s.name);
            let path: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
            for &(x, m, e) in &s.points {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{0:.2}" x2="{0:.2}" y1="{1:.2}" y2="{2:.2}" stroke="{c}"/><circle cx="{0:.2}" cy="{3:.2}" r="2.5" fill="{c}"/>"#,
                    sx(x),
                    sy(m - e),
                    sy(m + e),
                    sy(m)
                );
            }
        }
    }

    let legend_x = width - LEGEND_W + 5.0;
    for (i, name) in names.iter().enumerate() {
        let y = 1.5 * MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{legend_x}" x2="{}" y1="{y}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            legend_x + 18.0,
            color(name),
            legend_x + 24.0,
            y + 4.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_embeds_data_and_is_well_formed() {
        let panels = vec![Panel {
            title: "alpha = 0.1".into(),
            series: vec![Series {
                name: "FS <mu>".into(),
                points: vec![(40.0, 1.5, 0.1), (80.0, 1.25, 0.05)],
            }],
        }];
        let svg = line_chart("t", "D", "err", &panels);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("alpha = 0.1,FS &lt;mu&gt;,40,1.5,0.1"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn empty_panels_do_not_panic() {
        let svg = line_chart("t", "x", "y", &[Panel { title: "p".into(), series: vec![] }]);
        assert!(svg.contains("</svg>"));
    }
}
