//! Report emission: JSON report with an embedded manifest, a sidecar
//! manifest carrying the wall time, flattened CSV and SVG sweep plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mmlab_core::{Check, Error, Report, Result, RunManifest};
use serde::Serialize;
use serde_json::Value;

/// One plotted series: label and `(x, y)` points.
pub type Series = (String, Vec<(f64, f64)>);

/// Everything a command produces besides its exit status.
pub struct Outcome {
    pub report: Report,
    /// Lines printed to stdout.
    pub headline: Vec<String>,
    /// Sweeps available for `--plot`.
    pub series: Vec<Series>,
    pub x_label: String,
}

impl Outcome {
    pub fn new(report: Report, headline: impl Into<String>) -> Self {
        Outcome { report, headline: vec![headline.into()], series: Vec::new(), x_label: String::new() }
    }
}

/// Splits a serializable result into report values and checks.
pub fn report_of<T: Serialize>(value: &T) -> Result<Report> {
    let mut report = Report::new();
    match serde_json::to_value(value)? {
        Value::Object(map) => {
            for (k, v) in map {
                if k == "checks" {
                    let checks: Vec<Check> = serde_json::from_value(v)?;
                    report.extend_checks(checks);
                } else {
                    report.values.insert(k, v);
                }
            }
        }
        other => {
            report.values.insert("result".into(), other);
        }
    }
    Ok(report)
}

/// Where the outputs of one run go.
pub struct Sink {
    pub manifest: RunManifest,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub json: bool,
    pub start: Instant,
}

impl Sink {
    /// Writes the report (with the manifest minus wall time), the sidecar
    /// manifest, and the optional CSV and plot.
    pub fn emit(&mut self, mut outcome: Outcome) -> Result<()> {
        let embedded = serde_json::json!({
            "version": self.manifest.version,
            "command": self.manifest.command,
            "seed": self.manifest.seed,
            "input_digests": self.manifest.input_digests,
        });
        outcome.report.values.insert("manifest".into(), embedded);
        let text = outcome.report.to_json();
        if self.json {
            print!("{text}");
        } else {
            for line in &outcome.headline {
                println!("{line}");
            }
        }
        if let Some(path) = &self.out {
            std::fs::write(path, &text)?;
            self.manifest.wall_time_seconds = self.start.elapsed().as_secs_f64();
            let mut m = serde_json::to_string_pretty(&self.manifest)?;
            m.push('\n');
            std::fs::write(sidecar(path), m)?;
        }
        if let Some(path) = &self.csv {
            std::fs::write(path, flatten_csv(&outcome.report))?;
        }
        if let Some(path) = &self.plot {
            if outcome.series.is_empty() {
                return Err(Error::InvalidInput("--plot needs a sweep (pass several radii or lambdas)".into()));
            }
            std::fs::write(path, svg_plot(&outcome.x_label, &outcome.series))?;
        }
        Ok(())
    }
}

/// `report.json` -> `report.json.manifest.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn flatten_into(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, x, rows);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten_into(&format!("{prefix}.{i}"), x, rows);
            }
        }
        Value::Null => rows.push((prefix.to_string(), String::new())),
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

/// `key,value` rows for every scalar in the report, nested keys joined by dots.
pub fn flatten_csv(report: &Report) -> String {
    let mut rows = Vec::new();
    for (k, v) in &report.values {
        if k != "manifest" {
            flatten_into(k, v, &mut rows);
        }
    }
    for c in &report.checks {
        rows.push((format!("checks.{}.pass", c.name), c.pass.to_string()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"]).expect("in-memory write");
    for (k, v) in rows {
        w.write_record([k, v]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 csv")
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line-and-marker SVG of constant-vs-scale sweeps. The x axis is
/// logarithmic when all x are positive and span more than a factor 20.
pub fn svg_plot(x_label: &str, series: &[Series]) -> String {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let pts: Vec<(f64, f64)> =
        series.iter().flat_map(|s| s.1.iter().copied()).filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    let xmin = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let log_x = xmin > 0.0 && xmax / xmin > 20.0;
    let fx = |x: f64| if log_x { x.ln() } else { x };
    let (x0, x1) = widen(fx(xmin), fx(xmax));
    let ymin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let ymax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (y0, y1) = widen(ymin, ymax);
    let px = |x: f64| m + (fx(x) - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, escape(x_label));
    for (v, label) in [(y0, y0), (y1, y1)] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, m - 5.0, py(v) + 4.0, tick(label));
    }
    let xs = if log_x { (xmin, xmax) } else { (x0, x1) };
    for v in [xs.0, xs.1] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, px(v), h - m + 16.0, tick(v));
    }
    for (i, (name, data)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let good: Vec<&(f64, f64)> = data.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        if good.len() > 1 {
            let d: Vec<String> = good.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.join(" "));
        }
        for p in &good {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(p.0), py(p.1));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - m - 150.0,
            m + 16.0 * i as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn widen(a: f64, b: f64) -> (f64, f64) {
    if !a.is_finite() || !b.is_finite() {
        (0.0, 1.0)
    } else if a == b {
        (a - 0.5 * a.abs().max(1.0), b + 0.5 * b.abs().max(1.0))
    } else {
        (a, b)
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
