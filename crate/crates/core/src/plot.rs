//! Static faceted line charts as SVG 1.1.
//!
//! One panel per facet level, one line per (color, linetype) combination,
//! and a point-range at every point when interval columns are available.
//! Scales are shared across panels. Output depends only on the input table
//! and the [`PlotSpec`], so repeated renders are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::table::{Column, Table};
use crate::value::Value;

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];
const DASHES: [&str; 5] = ["", "7,4", "2,3", "9,3,2,3", "4,2,4,6"];

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 230.0;
const STRIP_H: f64 = 20.0;
const GAP: f64 = 16.0;
const LEFT: f64 = 64.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 48.0;
const LEGEND_W: f64 = 170.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    /// Lower and upper ends of the point-ranges. Default: `<y>_lo` / `<y>_hi` when present.
    pub ymin: Option<String>,
    pub ymax: Option<String>,
    pub color: Option<String>,
    pub linetype: Option<String>,
    pub facet: Option<String>,
    /// Keep rows whose column value is one of the listed levels.
    pub filters: Vec<(String, Vec<String>)>,
    pub title: Option<String>,
}

impl PlotSpec {
    pub fn new(x: impl Into<String>, y: impl Into<String>) -> Self {
        Self {
            x: x.into(),
            y: y.into(),
            ..Self::default()
        }
    }
}

/// Parse `column=level1,level2`.
pub fn parse_filter(s: &str) -> Result<(String, Vec<String>)> {
    let (col, levels) = s
        .split_once('=')
        .ok_or_else(|| Error::Plot(format!("filter `{s}` is not of the form column=level,...")))?;
    let levels: Vec<String> = levels
        .split(',')
        .map(|l| l.trim().to_owned())
        .filter(|l| !l.is_empty())
        .collect();
    if col.trim().is_empty() || levels.is_empty() {
        return Err(Error::Plot(format!("filter `{s}` needs a column and at least one level")));
    }
    Ok((col.trim().to_owned(), levels))
}

fn level_matches(v: &Value, wanted: &str) -> bool {
    if v.to_string() == wanted {
        return true;
    }
    match (v.as_f64(), wanted.parse::<f64>()) {
        (Some(a), Ok(b)) => (a - b).abs() <= 1e-9 * a.abs().max(1.0),
        _ => false,
    }
}

/// Distinct values of a column in display order: level order for
/// categoricals, ascending otherwise.
fn levels_of(col: &Column, rows: &[usize]) -> Vec<Value> {
    let mut seen: Vec<(Value, Value)> = Vec::new();
    for &i in rows {
        let key = match col {
            Column::Categorical { codes, .. } => codes[i].map_or(Value::Null, |c| Value::UInt(c.into())),
            other => other.get(i),
        };
        if !seen.iter().any(|(k, _)| k.total_cmp(&key).is_eq()) {
            seen.push((key, col.get(i)));
        }
    }
    seen.sort_by(|a, b| a.0.total_cmp(&b.0));
    seen.into_iter().map(|(_, v)| v).collect()
}

fn position(levels: &[Value], v: &Value) -> usize {
    levels.iter().position(|l| l.total_cmp(v).is_eq()).unwrap_or(0)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_step(range: f64, target: f64) -> f64 {
    let raw = (range / target).max(f64::MIN_POSITIVE);
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// Tick positions covering `[lo, hi]` and the number of decimals to print them with.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let step = nice_step(hi - lo, 5.0);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), decimals)
}

struct Scale {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        if self.hi == self.lo {
            (self.from + self.to) / 2.0
        } else {
            self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
        }
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if lo == hi {
        let d = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - d, hi + d)
    } else {
        let d = (hi - lo) * 0.05;
        (lo - d, hi + d)
    }
}

pub fn plot_svg(table: &Table, spec: &PlotSpec) -> Result<String> {
    // filtering
    let mut rows: Vec<usize> = (0..table.num_rows()).collect();
    for (name, wanted) in &spec.filters {
        let col = table.require(name)?;
        let available = levels_of(col, &rows);
        for w in wanted {
            if !available.iter().any(|v| level_matches(v, w)) {
                return Err(Error::Plot(format!(
                    "`{name}` has no level {w}; available levels: {}",
                    available.iter().map(Value::to_string).collect::<Vec<_>>().join(", ")
                )));
            }
        }
        rows.retain(|&i| wanted.iter().any(|w| level_matches(&col.get(i), w)));
    }

    let xcol = table.require(&spec.x)?;
    let ycol = table.require(&spec.y)?;
    let default_range = |suffix: &str| {
        let name = format!("{}_{suffix}", spec.y);
        table.column(&name).is_some().then_some(name)
    };
    let ymin_name = spec.ymin.clone().or_else(|| default_range("lo"));
    let ymax_name = spec.ymax.clone().or_else(|| default_range("hi"));
    let ymin = ymin_name.as_deref().map(|n| table.require(n)).transpose()?;
    let ymax = ymax_name.as_deref().map(|n| table.require(n)).transpose()?;
    let aes = |n: &Option<String>| n.as_deref().map(|n| table.require(n)).transpose();
    let (color, linetype, facet) = (aes(&spec.color)?, aes(&spec.linetype)?, aes(&spec.facet)?);

    rows.retain(|&i| ycol.get(i).as_f64().is_some_and(f64::is_finite) && !xcol.is_null(i));
    if rows.is_empty() {
        return Err(Error::Plot("no rows left to plot".into()));
    }

    let x_numeric = !matches!(xcol, Column::Text(_) | Column::Categorical { .. } | Column::Bool(_));
    let x_levels = levels_of(xcol, &rows);
    let xval = |i: usize| -> f64 {
        if x_numeric {
            xcol.get(i).as_f64().unwrap_or(f64::NAN)
        } else {
            position(&x_levels, &xcol.get(i)) as f64
        }
    };
    let facet_levels = facet.map_or_else(|| vec![Value::Null], |c| levels_of(c, &rows));
    let color_levels = color.map_or_else(|| vec![Value::Null], |c| levels_of(c, &rows));
    let line_levels = linetype.map_or_else(|| vec![Value::Null], |c| levels_of(c, &rows));
    let idx = |c: Option<&Column>, levels: &[Value], i: usize| c.map_or(0, |c| position(levels, &c.get(i)));

    // scales shared by all panels
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &i in &rows {
        let x = xval(i);
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        for c in [Some(ycol), ymin, ymax].into_iter().flatten() {
            if let Some(v) = c.get(i).as_f64().filter(|v| v.is_finite()) {
                y_lo = y_lo.min(v);
                y_hi = y_hi.max(v);
            }
        }
    }
    let (x_lo, x_hi) = padded(x_lo, x_hi);
    let (y_lo, y_hi) = padded(y_lo, y_hi);

    let n_panels = facet_levels.len();
    let ncol = n_panels.min(3);
    let nrow = n_panels.div_ceil(ncol);
    let has_legend = color.is_some() || linetype.is_some();
    let width = LEFT + ncol as f64 * (PANEL_W + GAP) + if has_legend { LEGEND_W } else { 0.0 };
    let height = TOP + nrow as f64 * (STRIP_H + PANEL_H + BOTTOM);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">
<rect width="100%" height="100%" fill="white"/>"#
    );
    if let Some(title) = &spec.title {
        let _ = writeln!(svg, r#"<text x="{LEFT}" y="22" font-size="14">{}</text>"#, esc(title));
    }

    // series: (facet, color, linetype) -> points sorted by x
    type Point = (f64, f64, Option<f64>, Option<f64>);
    let mut series: BTreeMap<(usize, usize, usize), Vec<Point>> = BTreeMap::new();
    for &i in &rows {
        let key = (
            idx(facet, &facet_levels, i),
            idx(color, &color_levels, i),
            idx(linetype, &line_levels, i),
        );
        let p = (
            xval(i),
            ycol.get(i).as_f64().unwrap(),
            ymin.and_then(|c| c.get(i).as_f64()).filter(|v| v.is_finite()),
            ymax.and_then(|c| c.get(i).as_f64()).filter(|v| v.is_finite()),
        );
        series.entry(key).or_default().push(p);
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let (xt, xdec) = ticks(x_lo, x_hi);
    let (yt, ydec) = ticks(y_lo, y_hi);
    for (p, level) in facet_levels.iter().enumerate() {
        let left = LEFT + (p % ncol) as f64 * (PANEL_W + GAP);
        let strip_top = TOP + (p / ncol) as f64 * (STRIP_H + PANEL_H + BOTTOM);
        let top = strip_top + STRIP_H;
        let sx = Scale { lo: x_lo, hi: x_hi, from: left, to: left + PANEL_W };
        let sy = Scale { lo: y_lo, hi: y_hi, from: top + PANEL_H, to: top };

        let _ = writeln!(svg, r#"<g class="panel">"#);
        if let (Some(name), Some(_)) = (&spec.facet, facet) {
            let _ = writeln!(
                svg,
                r##"<rect x="{left:.2}" y="{strip_top:.2}" width="{PANEL_W}" height="{STRIP_H}" fill="#d9d9d9"/>
<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                left + PANEL_W / 2.0,
                strip_top + 14.0,
                esc(&format!("{name}: {level}"))
            );
        }
        let _ = writeln!(
            svg,
            r##"<rect x="{left:.2}" y="{top:.2}" width="{PANEL_W}" height="{PANEL_H}" fill="#f5f5f5" stroke="#999999"/>"##
        );
        for &t in &yt {
            let y = sy.map(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{left:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ffffff"/>
<text x="{:.2}" y="{:.2}" text-anchor="end">{t:.ydec$}</text>"##,
                left + PANEL_W,
                left - 4.0,
                y + 4.0
            );
        }
        for &t in &xt {
            let x = sx.map(t);
            let label = if x_numeric {
                format!("{t:.xdec$}")
            } else {
                // only integer positions carry a level
                match x_levels.get(t as usize).filter(|_| t.fract() == 0.0 && t >= 0.0) {
                    Some(l) => l.to_string(),
                    None => continue,
                }
            };
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ffffff"/>
<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                top + PANEL_H,
                top + PANEL_H + 14.0,
                esc(&label)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            left + PANEL_W / 2.0,
            top + PANEL_H + 32.0,
            esc(&spec.x)
        );
        if p % ncol == 0 {
            let (cx, cy) = (left - 44.0, top + PANEL_H / 2.0);
            let _ = writeln!(
                svg,
                r#"<text x="{cx:.2}" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 {cx:.2} {cy:.2})">{}</text>"#,
                esc(&spec.y)
            );
        }
        for ((_, c, l), pts) in series.range((p, 0, 0)..(p + 1, 0, 0)) {
            let stroke = PALETTE[c % PALETTE.len()];
            let dash = DASHES[l % DASHES.len()];
            let dash_attr = if dash.is_empty() { String::new() } else { format!(r#" stroke-dasharray="{dash}""#) };
            let path: Vec<String> = pts
                .iter()
                .map(|(x, y, _, _)| format!("{:.2},{:.2}", sx.map(*x), sy.map(*y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"{dash_attr}/>"#,
                path.join(" ")
            );
            for (x, y, lo, hi) in pts {
                let px = sx.map(*x);
                if let (Some(lo), Some(hi)) = (lo, hi) {
                    let _ = writeln!(
                        svg,
                        r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="{stroke}"/>"#,
                        sy.map(*lo),
                        sy.map(*hi)
                    );
                }
                let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{:.2}" r="2.5" fill="{stroke}"/>"#, sy.map(*y));
            }
        }
        let _ = writeln!(svg, "</g>");
    }

    if has_legend {
        let lx = LEFT + ncol as f64 * (PANEL_W + GAP) + 8.0;
        let mut ly = TOP + STRIP_H + 8.0;
        let _ = writeln!(svg, r#"<g class="legend">"#);
        for (name, col, levels, is_color) in [
            (&spec.color, color, &color_levels, true),
            (&spec.linetype, linetype, &line_levels, false),
        ] {
            let (Some(name), Some(_)) = (name, col) else { continue };
            let _ = writeln!(svg, r#"<text x="{lx:.2}" y="{ly:.2}" font-weight="bold">{}</text>"#, esc(name));
            ly += 16.0;
            for (k, level) in levels.iter().enumerate() {
                let (stroke, dash) = if is_color {
                    (PALETTE[k % PALETTE.len()], "")
                } else {
                    ("#333333", DASHES[k % DASHES.len()])
                };
                let dash_attr = if dash.is_empty() { String::new() } else { format!(r#" stroke-dasharray="{dash}""#) };
                let _ = writeln!(
                    svg,
                    r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{stroke}" stroke-width="2"{dash_attr}/>
<text x="{:.2}" y="{ly:.2}">{}</text>"#,
                    ly - 4.0,
                    lx + 26.0,
                    ly - 4.0,
                    lx + 32.0,
                    esc(&level.to_string())
                );
                ly += 16.0;
            }
            ly += 10.0;
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
