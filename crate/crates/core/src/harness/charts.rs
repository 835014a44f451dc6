//! Static SVG charts with CSV sidecars holding the plotted numbers.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::config::VariationSpec;
use super::table::ResultTable;
use crate::clustering::Algorithm;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    /// Avg.Ev. per algorithm for one variation.
    AvgEvBars,
    /// One metric of one algorithm against the training fraction.
    MetricLine,
}

impl FromStr for ChartKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "avg_ev_bars" | "bars" => Ok(ChartKind::AvgEvBars),
            "metric_line" | "line" => Ok(ChartKind::MetricLine),
            _ => Err(Error::invalid(format!("unknown chart kind `{s}` (avg_ev_bars, metric_line)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Homogeneity,
    Completeness,
    VMeasure,
    Ari,
    Ami,
    Silhouette,
    AvgEv,
}

impl Metric {
    pub fn value(self, r: &MetricReport) -> Option<f64> {
        match self {
            Metric::Homogeneity => Some(r.homo),
            Metric::Completeness => Some(r.comp),
            Metric::VMeasure => Some(r.v_measure),
            Metric::Ari => Some(r.ari),
            Metric::Ami => Some(r.ami),
            Metric::Silhouette => r.silhouette,
            Metric::AvgEv => Some(r.avg_ev),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Homogeneity => "homogeneity",
            Metric::Completeness => "completeness",
            Metric::VMeasure => "v_measure",
            Metric::Ari => "ari",
            Metric::Ami => "ami",
            Metric::Silhouette => "silhouette",
            Metric::AvgEv => "avg_ev",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "homogeneity" | "homo" => Metric::Homogeneity,
            "completeness" | "comp" => Metric::Completeness,
            "v_measure" | "v_me" | "v" => Metric::VMeasure,
            "ari" => Metric::Ari,
            "ami" => Metric::Ami,
            "silhouette" | "silh" => Metric::Silhouette,
            "avg_ev" | "avgev" => Metric::AvgEv,
            _ => return Err(Error::invalid(format!("unknown metric `{s}`"))),
        })
    }
}

/// The plotted series: x labels and y values (`None` where undefined).
#[derive(Debug, Clone, PartialEq)]
pub struct ChartData {
    pub title: String,
    pub x_name: String,
    pub y_name: String,
    pub labels: Vec<String>,
    pub values: Vec<Option<f64>>,
}

impl ChartData {
    pub fn avg_ev_bars(table: &ResultTable) -> Self {
        ChartData {
            title: format!("Avg.Ev. per algorithm, {}", table.code),
            x_name: "algorithm".into(),
            y_name: "avg_ev".into(),
            labels: table.rows.iter().map(|(a, _)| a.name().to_string()).collect(),
            values: table.rows.iter().map(|(_, r)| Some(r.avg_ev)).collect(),
        }
    }

    /// Points ordered by fraction; every table must come from the same
    /// AS or AP family and fractions must be distinct.
    pub fn metric_line(tables: &[ResultTable], metric: Metric, algorithm: Algorithm) -> Result<Self> {
        let mut points = Vec::with_capacity(tables.len());
        let mut family = None;
        for t in tables {
            let spec = VariationSpec::parse(&t.code, 0)?;
            let n = spec
                .fraction_tenths
                .ok_or_else(|| Error::invalid("a fraction line needs AS or AP tables, not PLAIN"))?;
            match family {
                None => family = Some(spec.family),
                Some(f) if f != spec.family => {
                    return Err(Error::invalid(format!(
                        "metric_line mixes families {f:?} and {:?}",
                        spec.family
                    )))
                }
                _ => {}
            }
            let r = t
                .row(algorithm)
                .ok_or_else(|| Error::invalid(format!("table {} lacks {algorithm}", t.code)))?;
            points.push((n, metric.value(r)));
        }
        let family = family.ok_or_else(|| Error::invalid("no tables to chart"))?;
        points.sort_by_key(|p| p.0);
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("metric_line got two tables for the same fraction"));
        }
        Ok(ChartData {
            title: format!("{metric} of {algorithm}, variation {family:?}"),
            x_name: "fraction_tenths".into(),
            y_name: metric.name().into(),
            labels: points.iter().map(|p| p.0.to_string()).collect(),
            values: points.iter().map(|p| p.1).collect(),
        })
    }

    /// Full-precision values; parsing them gives back the same `f64`s.
    pub fn sidecar_csv(&self) -> String {
        let mut out = format!("{},{}\n", self.x_name, self.y_name);
        for (l, v) in self.labels.iter().zip(&self.values) {
            let v = v.map_or_else(String::new, |v| v.to_string());
            let _ = writeln!(out, "{l},{v}");
        }
        out
    }
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn y_range(values: &[Option<f64>]) -> (f64, f64) {
    let present = values.iter().flatten();
    let lo = present.clone().fold(0.0f64, |a, &b| a.min(b));
    let hi = present.fold(1.0f64, |a, &b| a.max(b));
    (lo, hi)
}

fn svg(data: &ChartData, kind: ChartKind) -> String {
    let (lo, hi) = y_range(&data.values);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let y = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);
    let n = data.labels.len().max(1) as f64;
    let slot = plot_w / n;
    let x_mid = |i: usize| LEFT + slot * (i as f64 + 0.5);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(&data.title));
    for tick in 0..=4 {
        let v = lo + (hi - lo) * f64::from(tick) / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{v:.2}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y(v) + 4.0,
            y = y(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" x2="{LEFT}" y1="{TOP}" y2="{}" stroke="black"/><line x1="{LEFT}" x2="{}" y1="{:.2}" y2="{:.2}" stroke="black"/>"#,
        H - BOTTOM,
        W - RIGHT,
        y(0.0),
        y(0.0)
    );
    match kind {
        ChartKind::AvgEvBars => {
            for (i, v) in data.values.iter().enumerate() {
                if let Some(v) = *v {
                    let (top, bottom) = (y(v.max(0.0)), y(v.min(0.0)));
                    let _ = writeln!(
                        s,
                        r##"<rect class="bar" x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="#4e79a7"><title>{}</title></rect>"##,
                        x_mid(i) - slot * 0.35,
                        slot * 0.7,
                        bottom - top,
                        v
                    );
                }
            }
        }
        ChartKind::MetricLine => {
            let pts: Vec<String> = data
                .values
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|v| format!("{:.2},{:.2}", x_mid(i), y(v))))
                .collect();
            let _ = writeln!(s, r##"<polyline fill="none" stroke="#e15759" stroke-width="2" points="{}"/>"##, pts.join(" "));
            for (i, v) in data.values.iter().enumerate() {
                if let Some(v) = *v {
                    let _ = writeln!(
                        s,
                        r##"<circle class="point" cx="{:.2}" cy="{:.2}" r="4" fill="#e15759"><title>{}</title></circle>"##,
                        x_mid(i),
                        y(v),
                        v
                    );
                }
            }
        }
    }
    for (i, l) in data.labels.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, x_mid(i), H - BOTTOM + 18.0, escape(l));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + plot_w / 2.0, H - 14.0, escape(&data.x_name));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&data.y_name)
    );
    s.push_str("</svg>\n");
    s
}

/// Writes `path` (SVG) and `path` with a `.csv` extension (the sidecar).
/// `avg_ev_bars` charts the single given table; `metric_line` charts
/// `metric` of `algorithm` across the tables' fractions.
pub fn emit_charts(
    tables: &[ResultTable],
    kind: ChartKind,
    metric: Metric,
    algorithm: Algorithm,
    path: &Path,
) -> Result<ChartData> {
    let data = match kind {
        ChartKind::AvgEvBars => match tables {
            [t] => ChartData::avg_ev_bars(t),
            _ => return Err(Error::invalid(format!("avg_ev_bars charts one table, got {}", tables.len()))),
        },
        ChartKind::MetricLine => ChartData::metric_line(tables, metric, algorithm)?,
    };
    util::write_atomic(path, svg(&data, kind).as_bytes())?;
    util::write_atomic(&sidecar_path(path), data.sidecar_csv().as_bytes())?;
    Ok(data)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("csv")
}
