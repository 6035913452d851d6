use std::fmt::Write;

use super::sweep::TradeoffPoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<TradeoffPoint>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const MIN_LATENCY_MS: f64 = 1e-3;

/// Geometry of the tradeoff chart: log-scale latency on x, metric on y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotLayout {
    pub width: f64,
    pub height: f64,
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
    /// log10 of the x range ends, whole decades.
    pub log_x_min: f64,
    pub log_x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl PlotLayout {
    /// Decades covering every point and the cutoff.
    pub fn fit(series: &[Series], cutoff_ms: f64) -> Self {
        let lat = series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.mean_latency_ms.max(MIN_LATENCY_MS)))
            .chain(std::iter::once(cutoff_ms.max(MIN_LATENCY_MS)));
        let (lo, hi) = lat.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let log_x_min = lo.log10().floor();
        let mut log_x_max = hi.log10().ceil();
        if log_x_max <= log_x_min {
            log_x_max = log_x_min + 1.0;
        }
        PlotLayout {
            width: 640.0,
            height: 420.0,
            left: 70.0,
            right: 610.0,
            top: 30.0,
            bottom: 370.0,
            log_x_min,
            log_x_max,
            y_min: 0.0,
            y_max: 1.0,
        }
    }

    pub fn x(&self, ms: f64) -> f64 {
        let t = (ms.max(MIN_LATENCY_MS).log10() - self.log_x_min) / (self.log_x_max - self.log_x_min);
        self.left + t * (self.right - self.left)
    }

    pub fn y(&self, v: f64) -> f64 {
        let t = (v - self.y_min) / (self.y_max - self.y_min);
        self.bottom - t.clamp(0.0, 1.0) * (self.bottom - self.top)
    }
}

/// Line chart of metric against mean latency, one polyline per series,
/// with the region left of `cutoff_ms` shaded.
pub fn plot_tradeoff(series: &[Series], cutoff_ms: f64) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(Error::invalid("plot needs at least one non-empty series"));
    }
    if !(cutoff_ms > 0.0 && cutoff_ms.is_finite()) {
        return Err(Error::invalid("low-latency cutoff must be positive"));
    }
    let l = PlotLayout::fit(series, cutoff_ms);
    let metric = &series[0].points[0].metric_name;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        l.width, l.height, l.width, l.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect class="low-latency" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#e8e8e8"/>"##,
        l.left,
        l.top,
        l.x(cutoff_ms) - l.left,
        l.bottom - l.top
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" fill="gray">≤ {} ms</text>"#,
        l.left + 4.0,
        l.top + 14.0,
        cutoff_ms
    );
    let _ = writeln!(
        s,
        r#"<path d="M{:.2} {:.2} V{:.2} H{:.2}" stroke="black" fill="none"/>"#,
        l.left, l.top, l.bottom, l.right
    );
    let mut decade = l.log_x_min;
    while decade <= l.log_x_max + 1e-9 {
        let ms = 10f64.powf(decade);
        let x = l.x(ms);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, l.bottom, l.bottom + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, l.bottom + 18.0, ms);
        decade += 1.0;
    }
    for i in 0..=5 {
        let v = l.y_min + (l.y_max - l.y_min) * i as f64 / 5.0;
        let y = l.y(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#, l.left - 5.0, l.left);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, l.left - 8.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">mean latency per query (ms, log scale)</text>"#,
        (l.left + l.right) / 2.0,
        l.height - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (l.top + l.bottom) / 2.0,
        (l.top + l.bottom) / 2.0,
        escape(metric)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", l.x(p.mean_latency_ms), l.y(p.metric_value)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = l.top + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{color}" text-anchor="end">{}</text>"#,
            l.right - 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(k: usize, ms: f64, v: f64) -> TradeoffPoint {
        TradeoffPoint {
            k,
            mean_latency_ms: ms,
            metric_value: v,
            metric_name: "ndcg@10".into(),
        }
    }

    #[test]
    fn one_series_two_points() {
        let s = vec![Series {
            name: "tiny".into(),
            points: vec![point(1, 2.0, 0.3), point(10, 80.0, 0.6)],
        }];
        let svg = plot_tradeoff(&s, 50.0).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        let l = PlotLayout::fit(&s, 50.0);
        let want = format!(r#"width="{:.2}""#, l.x(50.0) - l.left);
        let rect = svg.lines().find(|x| x.contains("low-latency")).unwrap();
        assert!(rect.contains(&want), "{rect}");
        assert_eq!(svg, plot_tradeoff(&s, 50.0).unwrap());
    }

    #[test]
    fn cutoff_inside_range_even_when_points_are_fast() {
        let s = vec![Series {
            name: "a".into(),
            points: vec![point(1, 0.2, 0.1)],
        }];
        let l = PlotLayout::fit(&s, 50.0);
        assert!(l.x(50.0) <= l.right && l.x(0.2) >= l.left);
    }

    #[test]
    fn empty_series_is_rejected() {
        assert!(plot_tradeoff(&[], 50.0).is_err());
        let s = vec![Series {
            name: "a".into(),
            points: vec![],
        }];
        assert!(plot_tradeoff(&s, 50.0).is_err());
    }
}
