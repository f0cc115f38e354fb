//! CSV tables, flat key = value reports and static SVG line plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use benjamin_core::experiments::ExperimentConfig;
use benjamin_core::spectral::CONVENTIONS;

/// Full-precision, locale-free number formatting used in every table.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        Csv {
            text: header.join(",") + "\n",
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn numbers(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
        self.row(&cells);
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        write_file(&dir.join(name), &self.text)
    }
}

/// Results followed by the convention block and the resolved configuration.
pub struct Report {
    command: String,
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str) -> Report {
        Report {
            command: command.to_string(),
            lines: Vec::new(),
        }
    }

    pub fn num(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.lines.push((key.into(), num(value)));
        self
    }

    pub fn opt(&mut self, key: impl Into<String>, value: Option<f64>) -> &mut Self {
        let v = value.map_or_else(|| "none".to_string(), num);
        self.lines.push((key.into(), v));
        self
    }

    pub fn int(&mut self, key: impl Into<String>, value: usize) -> &mut Self {
        self.lines.push((key.into(), value.to_string()));
        self
    }

    pub fn flag(&mut self, key: impl Into<String>, value: bool) -> &mut Self {
        self.lines.push((key.into(), value.to_string()));
        self
    }

    pub fn text(&mut self, key: impl Into<String>, value: &str) -> &mut Self {
        self.lines.push((key.into(), format!("{value:?}")));
        self
    }

    pub fn save(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
        let config = toml::to_string(cfg).context("cannot serialize the configuration")?;
        let mut out = format!("# benjamin-lab {}\n# results\n", self.command);
        for (k, v) in &self.lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push_str("\n# conventions\n");
        out.push_str(CONVENTIONS);
        out.push_str("\n# config\n");
        out.push_str(&config);
        write_file(&dir.join("report.txt"), &out)?;
        write_file(&dir.join("config.toml"), &config)
    }
}

pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Minimal static line plot; points that cannot be drawn on the chosen
/// scales (non-finite, or non-positive on a log axis) are skipped.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>], xs: Scale, ys: Scale) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (80.0, 20.0, 40.0, 60.0);
    let map = |v: f64, s: Scale| match s {
        Scale::Linear => v,
        Scale::Log => v.log10(),
    };
    let usable = |v: f64, s: Scale| v.is_finite() && (s == Scale::Linear || v > 0.0);
    let points: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.x.iter()
                .zip(s.y)
                .filter(|(x, y)| usable(**x, xs) && usable(**y, ys))
                .map(|(x, y)| (map(*x, xs), map(*y, ys)))
                .collect()
        })
        .collect();
    let all = points.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let label = |v: f64, s: Scale| match s {
        Scale::Linear => format!("{v:.3e}"),
        Scale::Log => format!("1e{v:.2}"),
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{l} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        l = left,
        t = top,
        b = h - bottom,
        r = w - right
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(xv),
            h - bottom + 18.0,
            label(xv, xs)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            py(yv) + 4.0,
            label(yv, ys)
        );
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        escape(y_label),
        y = h / 2.0
    );
    for (k, (s, pts)) in series.iter().zip(&points).enumerate() {
        let color = COLORS[k % COLORS.len()];
        if !pts.is_empty() {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        let ly = top + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}" text-anchor="end">{}</text>"#,
            w - right - 6.0,
            escape(s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
