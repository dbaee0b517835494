//! Static SVG line plots on log-log axes.
//!
//! Plots are a pure function of the CSV data they are built from: fixed
//! geometry, fixed palette, fixed numeric formatting, no scripting. The
//! same table bytes always produce the same image bytes.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 560.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 220.0;
const MARGIN_T: f64 = 46.0;
const MARGIN_B: f64 = 56.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// One curve.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Palette index.
    pub color: usize,
    /// Dash pattern (empty for solid).
    pub dash: &'static str,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, color: usize) -> Self {
        Self {
            label: label.into(),
            points,
            color,
            dash: "",
        }
    }

    pub fn dashed(mut self, dash: &'static str) -> Self {
        self.dash = dash;
        self
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Render a log-log line plot. Nonpositive coordinates are dropped.
pub fn loglog_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if x > 0.0 && y > 0.0 {
                xs.push(x.log10());
                ys.push(y.log10());
            }
        }
    }
    let (x_min, x_max) = decade_bounds(&xs);
    let (y_min, y_max) = decade_bounds(&ys);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let to_px = |lx: f64, ly: f64| -> (f64, f64) {
        (
            MARGIN_L + (lx - x_min) / (x_max - x_min) * plot_w,
            MARGIN_T + (y_max - ly) / (y_max - y_min) * plot_h,
        )
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="monospace" font-size="15" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        escape(title)
    );

    // Grid and ticks at whole decades.
    for dec in (x_min.ceil() as i64)..=(x_max.floor() as i64) {
        let (px, _) = to_px(dec as f64, y_min);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#dddddd" stroke-width="1"/>"#,
            fmt(px),
            fmt(MARGIN_T),
            fmt(px),
            fmt(MARGIN_T + plot_h)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="12" text-anchor="middle">1e{}</text>"#,
            fmt(px),
            fmt(MARGIN_T + plot_h + 18.0),
            dec
        );
    }
    for dec in (y_min.ceil() as i64)..=(y_max.floor() as i64) {
        let (_, py) = to_px(x_min, dec as f64);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#dddddd" stroke-width="1"/>"#,
            fmt(MARGIN_L),
            fmt(py),
            fmt(MARGIN_L + plot_w),
            fmt(py)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="12" text-anchor="end">1e{}</text>"#,
            fmt(MARGIN_L - 6.0),
            fmt(py + 4.0),
            dec
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black" stroke-width="1"/>"#,
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(plot_w),
        fmt(plot_h)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="monospace" font-size="13" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" font-family="monospace" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(y_label)
    );

    // Curves.
    for s in series {
        let color = PALETTE[s.color % PALETTE.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for &(x, y) in &s.points {
            if x > 0.0 && y > 0.0 {
                let (px, py) = to_px(x.log10(), y.log10());
                let _ = write!(d, "{}{},{} ", if pen_down { "L" } else { "M" }, fmt(px), fmt(py));
                pen_down = true;
            } else {
                pen_down = false;
            }
        }
        let dash = if s.dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{}""#, s.dash)
        };
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#,
            d.trim_end()
        );
    }

    // Legend.
    let lx = MARGIN_L + plot_w + 16.0;
    for (i, s) in series.iter().enumerate() {
        let ly = MARGIN_T + 12.0 + i as f64 * 20.0;
        let color = PALETTE[s.color % PALETTE.len()];
        let dash = if s.dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{}""#, s.dash)
        };
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="1.6"{dash}/>"#,
            fmt(lx),
            fmt(ly),
            fmt(lx + 26.0),
            fmt(ly)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="12">{}</text>"#,
            fmt(lx + 32.0),
            fmt(ly + 4.0),
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn decade_bounds(logs: &[f64]) -> (f64, f64) {
    if logs.is_empty() {
        return (0.0, 1.0);
    }
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.05 * (hi - lo).max(1e-9);
    (lo - pad, hi + pad)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write an SVG next to its data.
pub fn save(path: &Path, svg: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_deterministic() {
        let s = vec![Series::new(
            "curve",
            vec![(1.0, 1.0), (10.0, 0.1), (100.0, 0.01)],
            0,
        )];
        let a = loglog_plot("t", "k", "err", &s);
        let b = loglog_plot("t", "k", "err", &s);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn nonpositive_points_are_dropped() {
        let s = vec![Series::new("z", vec![(1.0, 0.0), (10.0, 1.0)], 0)];
        let svg = loglog_plot("t", "k", "err", &s);
        assert!(svg.contains("<path"));
    }
}
