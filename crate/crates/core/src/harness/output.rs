//! File formats: CSV curves and tables, pretty JSON reports, SVG quick-look
//! plots.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnsembleSummary, VERSION};
use crate::analytics::BoundsReport;
use crate::error::{Error, Result};

pub const CURVE_HEADER: [&str; 4] = ["t", "mean_L", "stderr_L", "bound_L"];
pub const FIGURE1_HEADER: [&str; 6] = ["N", "L_target", "t_m", "t_fb", "speedup_lower", "asymptotic_limit"];

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// `t, mean_L, stderr_L, bound_L`, one row per sampled time.
pub fn curve_csv(summary: &EnsembleSummary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER).map_err(csv_err)?;
    let bound = summary.bound_curve();
    for i in 0..summary.times.len() {
        w.write_record([
            summary.times[i].to_string(),
            summary.mean_impurity[i].to_string(),
            summary.stderr_impurity[i].to_string(),
            bound[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn figure1_csv(rows: &[BoundsReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FIGURE1_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.l_target.to_string(),
            r.t_m.to_string(),
            r.t_fb.to_string(),
            r.speedup_lower.to_string(),
            r.asymptotic_speedup.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Report {
    pub version: String,
    pub gamma: f64,
    pub n_list: Vec<usize>,
    pub targets: Vec<f64>,
    pub rows: Vec<BoundsReport>,
}

impl Figure1Report {
    pub fn new(gamma: f64, n_list: &[usize], targets: &[f64], rows: Vec<BoundsReport>) -> Self {
        Self {
            version: VERSION.to_string(),
            gamma,
            n_list: n_list.to_vec(),
            targets: targets.to_vec(),
            rows,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    log_x: bool,
    log_y: bool,
    series: Vec<Series>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn parse_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("non-numeric CSV field '{f}'"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Option<usize> {
    header.iter().position(|h| h == name)
}

/// Render a curve CSV (log-scale impurity against time) or a Figure-1 table
/// (speed-up against log target, one line per N) as SVG.
pub fn plot_svg(csv_text: &str) -> Result<String> {
    let (header, rows) = parse_table(csv_text)?;
    if rows.is_empty() {
        return Err(Error::InvalidArgument("CSV has no data rows".into()));
    }
    let chart = if header.iter().map(String::as_str).eq(CURVE_HEADER) {
        let pick = |c: usize| rows.iter().map(|r| (r[0], r[c])).collect::<Vec<_>>();
        Chart {
            title: "Mean impurity".into(),
            x_label: "t".into(),
            y_label: "L".into(),
            log_x: false,
            log_y: true,
            series: vec![
                Series { label: "mean_L".into(), points: pick(1) },
                Series { label: "bound_L".into(), points: pick(3) },
            ],
        }
    } else if let (Some(cn), Some(cl), Some(cs)) = (
        column(&header, "N"),
        column(&header, "L_target"),
        column(&header, "speedup_lower"),
    ) {
        let mut ns: Vec<i64> = rows.iter().map(|r| r[cn] as i64).collect();
        ns.dedup();
        ns.sort_unstable();
        ns.dedup();
        let series = ns
            .iter()
            .map(|&n| Series {
                label: format!("N = {n}"),
                points: rows
                    .iter()
                    .filter(|r| r[cn] as i64 == n)
                    .map(|r| (r[cl], r[cs]))
                    .collect(),
            })
            .collect();
        Chart {
            title: "Speed-up lower bound".into(),
            x_label: "target impurity".into(),
            y_label: "S".into(),
            log_x: true,
            log_y: false,
            series,
        }
    } else {
        return Err(Error::InvalidArgument(format!(
            "unrecognized CSV header {header:?}"
        )));
    };
    render(&chart)
}

fn axis_range(values: impl Iterator<Item = f64>, log: bool) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        let v = if log {
            if v <= 0.0 || !v.is_finite() {
                continue;
            }
            v.log10()
        } else {
            v
        };
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        return None;
    }
    if log {
        lo = lo.floor();
        hi = hi.ceil();
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    Some((lo, hi))
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    if log {
        let step = ((hi - lo) / 8.0).ceil().max(1.0);
        let mut out = Vec::new();
        let mut e = lo;
        while e <= hi + 1e-9 {
            out.push((e, format!("1e{}", e as i64)));
            e += step;
        }
        return out;
    }
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut v = (lo / step).ceil() * step;
    while v <= hi + 1e-9 * step {
        out.push((v, format!("{}", (v / step).round() * step)));
        v += step;
    }
    out
}

fn render(chart: &Chart) -> Result<String> {
    let (w, h) = (800.0, 500.0);
    let (ml, mr, mt, mb) = (80.0, 150.0, 40.0, 60.0);
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    let all = || chart.series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = axis_range(all().map(|p| p.0), chart.log_x)
        .ok_or_else(|| Error::InvalidArgument("no plottable x values".into()))?;
    let (y0, y1) = axis_range(all().map(|p| p.1), chart.log_y)
        .ok_or_else(|| Error::InvalidArgument("no plottable y values".into()))?;
    let tx = |x: f64| {
        let x = if chart.log_x { x.log10() } else { x };
        ml + (x - x0) / (x1 - x0) * pw
    };
    let ty = |y: f64| {
        let y = if chart.log_y { y.log10() } else { y };
        mt + ph - (y - y0) / (y1 - y0) * ph
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, ml + pw / 2.0, chart.title);
    let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for (v, label) in ticks(x0, x1, chart.log_x) {
        let px = ml + (v - x0) / (x1 - x0) * pw;
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{mt}" x2="{px:.2}" y2="{}" stroke="#ddd"/>"##, mt + ph);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{label}</text>"#, mt + ph + 18.0);
    }
    for (v, label) in ticks(y0, y1, chart.log_y) {
        let py = mt + ph - (v - y0) / (y1 - y0) * ph;
        let _ = writeln!(s, r##"<line x1="{ml}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#ddd"/>"##, ml + pw);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, ml - 6.0, py + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, h - 15.0, chart.x_label);
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        chart.y_label
    );
    for (i, series) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = series
            .points
            .iter()
            .filter(|(x, y)| (!chart.log_x || *x > 0.0) && (!chart.log_y || *y > 0.0) && x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", tx(x), ty(y)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = mt + 20.0 + 20.0 * i as f64;
        let lx = ml + pw + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 25.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 32.0, ly + 4.0, series.label);
    }
    s.push_str("</svg>\n");
    Ok(s)
}
