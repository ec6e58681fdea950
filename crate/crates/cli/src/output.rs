//! CSV tables, JSON reports and SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Value};

use yoctoforce::constants::hertz;
use yoctoforce::estimator::JointFitResult;
use yoctoforce::Estimate;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Provenance written at the top of every file.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Meta {
    pub fn new(command: &str, seed: u64, cfg: &RunConfig) -> Self {
        Self {
            command: command.into(),
            seed,
            config_hash: cfg.hash(),
        }
    }

    fn schema(&self, table: &str) -> String {
        format!("yoctoforce/{table}/v{SCHEMA_VERSION}")
    }
}

/// Twelve significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

pub struct Output {
    pub dir: PathBuf,
    pub plots: bool,
}

impl Output {
    pub fn new(dir: &Path, plots: bool) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            plots,
        })
    }

    fn write(&self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn csv(&self, name: &str, meta: &Meta, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<PathBuf> {
        let table = name.trim_end_matches(".csv");
        let mut text = String::new();
        writeln!(text, "# schema: {}", meta.schema(table))?;
        writeln!(text, "# command: {}", meta.command)?;
        writeln!(text, "# seed: {}", meta.seed)?;
        writeln!(text, "# config_sha256: {}", meta.config_hash)?;
        writeln!(text, "# frequencies in Hz")?;
        writeln!(text, "{}", header.join(","))?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            writeln!(text, "{}", row.join(","))?;
        }
        self.write(name, &text)
    }

    pub fn json(&self, name: &str, meta: &Meta, body: Value) -> anyhow::Result<PathBuf> {
        let mut report = json!({
            "schema": meta.schema("report"),
            "command": meta.command,
            "seed": meta.seed,
            "config_sha256": meta.config_hash,
        });
        if let (Some(r), Value::Object(extra)) = (report.as_object_mut(), body) {
            r.extend(extra);
        }
        self.write(name, &(serde_json::to_string_pretty(&report)? + "\n"))
    }

    pub fn svg(&self, name: &str, plot: &Plot) -> anyhow::Result<Option<PathBuf>> {
        if !self.plots {
            return Ok(None);
        }
        self.write(name, &plot.render()).map(Some)
    }
}

/// Report block for the JSON `fits` array, frequencies in Hz.
pub fn fit_summary(cooperativity_set: f64, seed: u64, fit: &JointFitResult) -> Value {
    let hz = |e: Estimate| Estimate::new(hertz(e.value), hertz(e.sigma));
    let n = fit.model.layout.n_peaks;
    json!({
        "cooperativity_set": cooperativity_set,
        "seed": seed,
        "status": fit.status,
        "iterations": fit.iterations,
        "chi2": fit.chi2,
        "dof": fit.dof,
        "omega_m_hz": hz(fit.omega_m()),
        "gamma_hz": hz(fit.gamma()),
        "a_sig": (0..n).map(|k| fit.a_sig(k)).collect::<Vec<_>>(),
        "phase": (0..n).map(|k| fit.model.phase(k)).collect::<Vec<_>>(),
        "noise_amplitude": (0..n).map(|k| fit.noise_amplitude(k)).collect::<Vec<_>>(),
        "floor": fit.floor(),
        "offsets_hz": fit.model.offsets.iter().map(|d| hertz(*d)).collect::<Vec<_>>(),
    })
}

// ---------------------------------------------------------------- SVG

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Style {
    Line,
    Dashed,
    Markers,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Symmetric y error bars, one per point.
    pub errors: Option<Vec<f64>>,
    pub style: Style,
}

impl Series {
    pub fn new(name: &str, points: Vec<(f64, f64)>, style: Style) -> Self {
        Self {
            name: name.into(),
            points,
            errors: None,
            style,
        }
    }

    pub fn with_errors(mut self, errors: Vec<f64>) -> Self {
        self.errors = Some(errors);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub equal_aspect: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#555555"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round-number tick positions covering [lo, hi].
fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    while t <= hi + 1e-9 * step {
        ticks.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    ticks
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-2..1e4).contains(&v.abs()) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            equal_aspect: false,
            series: Vec::new(),
        }
    }

    pub fn log_log(mut self) -> Self {
        self.log_x = true;
        self.log_y = true;
        self
    }

    fn tx(&self, v: f64, log: bool) -> f64 {
        if log {
            v.log10()
        } else {
            v
        }
    }

    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let e = s.errors.as_ref().map_or(0.0, |e| e[i]);
                let x = self.tx(x, self.log_x);
                for yy in [y - e, y + e] {
                    if self.log_y && yy <= 0.0 {
                        continue;
                    }
                    let yy = self.tx(yy, self.log_y);
                    if yy.is_finite() {
                        ys = (ys.0.min(yy), ys.1.max(yy));
                    }
                }
                if x.is_finite() {
                    xs = (xs.0.min(x), xs.1.max(x));
                }
            }
        }
        let pad = |(lo, hi): (f64, f64)| {
            if !lo.is_finite() {
                return (0.0, 1.0);
            }
            let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        let (mut xs, mut ys) = (pad(xs), pad(ys));
        if self.equal_aspect {
            let pw = WIDTH - MARGIN_L - MARGIN_R;
            let ph = HEIGHT - MARGIN_T - MARGIN_B;
            let scale = ((xs.1 - xs.0) / pw).max((ys.1 - ys.0) / ph);
            let (cx, cy) = ((xs.0 + xs.1) / 2.0, (ys.0 + ys.1) / 2.0);
            xs = (cx - scale * pw / 2.0, cx + scale * pw / 2.0);
            ys = (cy - scale * ph / 2.0, cy + scale * ph / 2.0);
        }
        (xs, ys)
    }

    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.bounds();
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let px = |x: f64| MARGIN_L + (self.tx(x, self.log_x) - x0) / (x1 - x0) * pw;
        let py = |y: f64| MARGIN_T + ph - (self.tx(y, self.log_y) - y0) / (y1 - y0) * ph;
        let visible = |y: f64| !self.log_y || y > 0.0;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_L + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );

        // ticks in transformed coordinates; log axes label decades
        for (lo, hi, log, is_x) in [(x0, x1, self.log_x, true), (y0, y1, self.log_y, false)] {
            let ticks: Vec<f64> = if log {
                (lo.ceil() as i32..=hi.floor() as i32).map(f64::from).collect()
            } else {
                linear_ticks(lo, hi)
            };
            for t in ticks {
                let value = if log { 10f64.powf(t) } else { t };
                let label = tick_label(value);
                if is_x {
                    let x = px(value);
                    let _ = writeln!(
                        s,
                        r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
                        MARGIN_T + ph,
                        MARGIN_T + ph - 5.0,
                        MARGIN_T + ph + 16.0
                    );
                } else {
                    let y = py(value);
                    let _ = writeln!(
                        s,
                        r#"<line x1="{MARGIN_L}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#,
                        MARGIN_L + 5.0,
                        MARGIN_L - 6.0,
                        y + 4.0
                    );
                }
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(18,{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );

        let _ = writeln!(
            s,
            r#"<clipPath id="plot"><rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}"/></clipPath><g clip-path="url(#plot)">"#
        );
        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            match series.style {
                Style::Line | Style::Dashed => {
                    let path: Vec<String> = series
                        .points
                        .iter()
                        .filter(|(_, y)| visible(*y))
                        .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                        .collect();
                    let dash = if series.style == Style::Dashed { r#" stroke-dasharray="6,4""# } else { "" };
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                        path.join(" ")
                    );
                }
                Style::Markers => {
                    for (i, &(x, y)) in series.points.iter().enumerate() {
                        if let Some(e) = series.errors.as_ref().map(|e| e[i]) {
                            let lo = if visible(y - e) { py(y - e) } else { MARGIN_T + ph };
                            let _ = writeln!(
                                s,
                                r#"<line x1="{0:.2}" y1="{lo:.2}" x2="{0:.2}" y2="{1:.2}" stroke="{color}"/>"#,
                                px(x),
                                py(y + e)
                            );
                        }
                        if visible(y) {
                            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(x), py(y));
                        }
                    }
                }
            }
        }
        let _ = writeln!(s, "</g>");

        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let y = MARGIN_T + 14.0 + 18.0 * k as f64;
            let x = WIDTH - MARGIN_R + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                x + 18.0,
                x + 24.0,
                y + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Points on an ellipse with the given centre, semi-axes and orientation.
pub fn ellipse_outline(center: [f64; 2], radii: [f64; 2], angle: f64) -> Vec<(f64, f64)> {
    let (sa, ca) = angle.sin_cos();
    (0..=96)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / 96.0;
            let (u, v) = (radii[0] * t.cos(), radii[1] * t.sin());
            (center[0] + ca * u - sa * v, center[1] + sa * u + ca * v)
        })
        .collect()
}
