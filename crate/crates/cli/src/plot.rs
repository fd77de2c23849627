//! Minimal SVG line charts for the comparison runs.

use std::fmt::Write as _;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];
/// Polylines are decimated to at most this many points.
const MAX_POINTS: usize = 2000;

#[derive(Debug, Clone)]
pub struct Series<'a> {
    pub label: String,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub dashed: bool,
}

#[derive(Debug, Clone)]
pub struct Chart<'a> {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series<'a>>,
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Roughly five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-9 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(chart: &Chart) -> String {
    let (x0, x1) = bounds(chart.series.iter().flat_map(|s| s.x.iter()));
    let (y0, y1) = bounds(chart.series.iter().flat_map(|s| s.y.iter()));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&chart.title)
    );

    s.push_str("<g class=\"axes\" stroke=\"#444\" fill=\"none\">\n");
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/>"#);
    s.push_str("</g>\n<g class=\"ticks\" font-size=\"11\">\n");
    for t in ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, TOP + ph);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, fmt_tick(t));
    }
    for t in ticks(y0, y1) {
        let y = py(t);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_tick(t));
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(&chart.y_label)
    );

    for (k, series) in chart.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let n = series.x.len().min(series.y.len());
        let stride = n.div_ceil(MAX_POINTS).max(1);
        let mut points = String::new();
        for i in (0..n).step_by(stride).chain((n > 0 && (n - 1) % stride != 0).then_some(n - 1)) {
            let (x, y) = (series.x[i], series.y[i]);
            if x.is_finite() && y.is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", px(x), py(y));
            }
        }
        let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.3"{dash} points="{}"/>"#,
            points.trim_end()
        );
    }

    s.push_str("<g class=\"legend\">\n");
    for (k, series) in chart.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let y = TOP + 10.0 + 20.0 * k as f64;
        let x = WIDTH - RIGHT + 15.0;
        let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>"#,
            x + 25.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x + 32.0, y + 4.0, escape(&series.label));
    }
    s.push_str("</g>\n</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_polylines_axes_and_legend() {
        let x: Vec<f64> = (0..5000).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = x.iter().map(|t| t.sin()).collect();
        let chart = Chart {
            title: "a < b".into(),
            x_label: "t [s]".into(),
            y_label: "y".into(),
            series: vec![
                Series {
                    label: "one".into(),
                    x: &x,
                    y: &y,
                    dashed: false,
                },
                Series {
                    label: "two".into(),
                    x: &x,
                    y: &x,
                    dashed: true,
                },
            ],
        };
        let svg = render(&chart);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("class=\"axes\""));
        assert!(svg.contains("class=\"legend\""));
        assert!(svg.contains("a &lt; b"));
        let pts = svg.lines().find(|l| l.starts_with("<polyline")).unwrap().matches(',').count();
        assert!(pts <= MAX_POINTS + 1, "{pts}");
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 80.0), vec![0.0, 20.0, 40.0, 60.0, 80.0]);
        assert_eq!(ticks(-1.0, 1.0), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn degenerate_data_does_not_panic() {
        let x = [1.0];
        let y = [f64::NAN];
        let svg = render(&Chart {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            series: vec![Series {
                label: "x".into(),
                x: &x,
                y: &y,
                dashed: false,
            }],
        });
        assert!(svg.contains("</svg>"));
    }
}
