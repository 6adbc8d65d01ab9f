//! Deterministic SVG line plots of CSV columns.
//!
//! Output depends only on the CSV text and the [`PlotSpec`]: fixed canvas,
//! fixed palette, fixed number formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{domain, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Which columns to draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    /// One curve per column; with `group`, one curve per group of the first column.
    pub ys: Vec<String>,
    /// Split rows into curves by the value of this column.
    pub group: Option<String>,
    pub title: String,
    /// `None` chooses log scale when all values are positive and span more than two decades.
    pub log_x: Option<bool>,
    pub log_y: Option<bool>,
}

impl PlotSpec {
    pub fn new(x: &str, ys: &[&str], title: &str) -> Self {
        Self {
            x: x.into(),
            ys: ys.iter().map(|s| s.to_string()).collect(),
            group: None,
            title: title.into(),
            log_x: None,
            log_y: None,
        }
    }

    pub fn grouped(mut self, column: &str) -> Self {
        self.group = Some(column.into());
        self
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64> + Clone, log: Option<bool>) -> Self {
        let pos = values.clone().all(|v| v > 0.0);
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let log = log.unwrap_or(pos && hi / lo > 100.0) && pos;
        if log {
            lo = lo.log10().floor();
            hi = hi.log10().ceil();
        }
        if hi <= lo {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let step = ((self.hi - self.lo) / 8.0).ceil().max(1.0);
            let mut out = Vec::new();
            let mut e = self.lo;
            while e <= self.hi + 1e-9 {
                out.push((10f64.powf(e), format!("1e{}", e as i64)));
                e += step;
            }
            out
        } else {
            (0..=5)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (v, fmt_tick(v))
                })
                .collect()
        }
    }
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the requested columns of `csv_text` as an SVG document.
pub fn svg_lineplot(csv_text: &str, spec: &PlotSpec) -> Result<String> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers().map_err(|e| domain(format!("unreadable CSV header: {e}")))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| domain(format!("CSV has no column `{name}`")))
    };
    if spec.ys.is_empty() {
        return Err(domain("no y columns requested"));
    }
    let xi = col(&spec.x)?;
    let yis = spec.ys.iter().map(|y| col(y)).collect::<Result<Vec<_>>>()?;
    let gi = spec.group.as_deref().map(col).transpose()?;

    let mut series: BTreeMap<(usize, String), Vec<(f64, f64)>> = BTreeMap::new();
    let mut order: Vec<(usize, String)> = Vec::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| domain(format!("malformed CSV row: {e}")))?;
        rows += 1;
        let x: f64 = rec[xi].parse().unwrap_or(f64::NAN);
        for (k, &yi) in yis.iter().enumerate() {
            let y: f64 = rec[yi].parse().unwrap_or(f64::NAN);
            let label = match gi {
                Some(g) => format!("{} = {}", headers[g].to_string(), short(&rec[g])),
                None => spec.ys[k].clone(),
            };
            let key = (if gi.is_some() { 0 } else { k }, label);
            if !series.contains_key(&key) {
                order.push(key.clone());
            }
            series.entry(key).or_default().push((x, y));
        }
    }
    if rows == 0 {
        return Err(domain("CSV has no data rows"));
    }
    let log_x = spec.log_x;
    let log_y = spec.log_y;
    let usable = |(x, y): &(f64, f64), lx: bool, ly: bool| {
        x.is_finite() && y.is_finite() && (!lx || *x > 0.0) && (!ly || *y > 0.0)
    };
    let all: Vec<(f64, f64)> = series.values().flatten().copied().filter(|p| usable(p, false, false)).collect();
    if all.is_empty() {
        return Err(domain("CSV has no finite values in the requested columns"));
    }
    let ax = Axis::fit(all.iter().map(|p| p.0), log_x);
    let ay = Axis::fit(all.iter().filter(|p| !ax.log || p.0 > 0.0).map(|p| p.1), log_y);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + ax.frac(x) * pw;
    let py = |y: f64| TOP + (1.0 - ay.frac(y)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(&spec.title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for (v, label) in ax.ticks() {
        let x = px(v);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, TOP + ph + 18.0);
    }
    for (v, label) in ay.ticks() {
        let y = py(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 15.0, escape(&spec.x));
    for (i, key) in order.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = series[key]
            .iter()
            .filter(|p| usable(p, ax.log, ay.log))
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&key.1));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn short(v: &str) -> String {
    v.parse::<f64>().map(fmt_tick).unwrap_or_else(|_| v.to_string())
}

/// Writes `<csv stem>.svg` next to the CSV and returns its path.
pub fn emit_svg_lineplot(csv_path: &Path, spec: &PlotSpec) -> Result<PathBuf> {
    let text = std::fs::read_to_string(csv_path)?;
    let svg = svg_lineplot(&text, spec)?;
    let out = csv_path.with_extension("svg");
    std::fs::write(&out, svg)?;
    Ok(out)
}
