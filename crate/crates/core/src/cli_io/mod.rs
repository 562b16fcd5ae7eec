//! CSV and SVG output, the `key = value` configuration format, and the command line.

pub mod cli;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::error_metrics::{ErrorRow, ErrorTable, Measure};
use crate::pdae_core::{State, TimeGrid, Trajectory};
use crate::sweep_rates::RateTable;

pub const ERRORS_HEADER: &str = "n,epsilon,measure,value";
pub const RATES_HEADER: &str = "n,measure,alpha";
pub const TRAJECTORY_HEADER: &str = "t,variable,index,value";

/// Shortest representation that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn errors_csv(table: &ErrorTable) -> String {
    let mut out = String::from(ERRORS_HEADER);
    out.push('\n');
    for r in table.rows() {
        let _ = writeln!(out, "{},{},{},{}", r.n, num(r.eps), r.measure, num(r.value));
    }
    out
}

pub fn write_errors_csv(table: &ErrorTable, path: &Path) -> Result<()> {
    write_file(path, &errors_csv(table))
}

pub fn read_errors_csv(path: &Path) -> Result<ErrorTable> {
    parse_errors_csv(&read_file(path)?, path)
}

pub fn parse_errors_csv(text: &str, path: &Path) -> Result<ErrorTable> {
    let mut table = ErrorTable::new();
    for (line, fields) in csv_records(text, path, ERRORS_HEADER, 4)? {
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let row = ErrorRow {
            n: parse_field(&fields[0], "n").map_err(err)?,
            eps: parse_field(&fields[1], "epsilon").map_err(err)?,
            measure: fields[2]
                .parse::<Measure>()
                .map_err(|e| err(e.to_string()))?,
            value: parse_field(&fields[3], "value").map_err(err)?,
        };
        table.push(row).map_err(|e| err(e.to_string()))?;
    }
    Ok(table)
}

/// One line of a rates file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateEntry {
    pub n: usize,
    pub measure: Measure,
    pub alpha: f64,
}

pub fn rates_csv(table: &RateTable) -> String {
    let mut out = String::from(RATES_HEADER);
    out.push('\n');
    for r in &table.rows {
        let _ = writeln!(out, "{},{},{}", r.n, r.measure, num(r.alpha));
    }
    out
}

pub fn write_rates_csv(table: &RateTable, path: &Path) -> Result<()> {
    write_file(path, &rates_csv(table))
}

pub fn read_rates_csv(path: &Path) -> Result<Vec<RateEntry>> {
    parse_rates_csv(&read_file(path)?, path)
}

pub fn parse_rates_csv(text: &str, path: &Path) -> Result<Vec<RateEntry>> {
    csv_records(text, path, RATES_HEADER, 3)?
        .into_iter()
        .map(|(line, f)| {
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            };
            Ok(RateEntry {
                n: parse_field(&f[0], "n").map_err(err)?,
                measure: f[1].parse::<Measure>().map_err(|e| err(e.to_string()))?,
                alpha: parse_field(&f[2], "alpha").map_err(err)?,
            })
        })
        .collect()
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for s in traj.states() {
        let t = num(s.t);
        for (name, v) in [("p", &s.p), ("m", &s.m), ("lambda", &s.lambda)] {
            for (i, x) in v.iter().enumerate() {
                let _ = writeln!(out, "{t},{name},{i},{}", num(*x));
            }
        }
    }
    out
}

pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    write_file(path, &trajectory_csv(traj))
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    parse_trajectory_csv(&read_file(path)?, path)
}

pub fn parse_trajectory_csv(text: &str, path: &Path) -> Result<Trajectory> {
    // Keyed by the bit pattern of t to keep node order exact.
    let mut nodes: Vec<f64> = Vec::new();
    let mut data: BTreeMap<(usize, u8), BTreeMap<usize, f64>> = BTreeMap::new();
    for (line, f) in csv_records(text, path, TRAJECTORY_HEADER, 4)? {
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let t: f64 = parse_field(&f[0], "t").map_err(err)?;
        if nodes.last() != Some(&t) {
            nodes.push(t);
        }
        let var = match f[1].as_str() {
            "p" => 0u8,
            "m" => 1,
            "lambda" => 2,
            other => return Err(err(format!("unknown variable {other:?}"))),
        };
        let idx: usize = parse_field(&f[2], "index").map_err(err)?;
        let value: f64 = parse_field(&f[3], "value").map_err(err)?;
        data.entry((nodes.len() - 1, var))
            .or_default()
            .insert(idx, value);
    }
    let parse_err = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: msg.to_string(),
    };
    let grid = TimeGrid::from_nodes(nodes.clone()).map_err(|e| parse_err(&e.to_string()))?;
    let vector = |i: usize, var: u8| -> Result<DVector<f64>> {
        let entries = data.get(&(i, var)).cloned().unwrap_or_default();
        if entries.keys().enumerate().any(|(k, &idx)| k != idx) {
            return Err(parse_err("trajectory indices are not contiguous"));
        }
        Ok(DVector::from_iterator(entries.len(), entries.into_values()))
    };
    let states = (0..nodes.len())
        .map(|i| {
            Ok(State::new(
                nodes[i],
                vector(i, 0)?,
                vector(i, 1)?,
                vector(i, 2)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(grid, states).map_err(|e| parse_err(&e.to_string()))
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("cannot parse {what} from {s:?}"))
}

fn csv_records(
    text: &str,
    path: &Path,
    header: &str,
    width: usize,
) -> Result<Vec<(usize, Vec<String>)>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    match records.next() {
        Some(Ok(h)) if h.iter().collect::<Vec<_>>().join(",") == header => {}
        _ => return Err(parse_err(1, format!("expected header {header:?}"))),
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

const SVG_WIDTH: f64 = 960.0;
const SVG_HEIGHT: f64 = 480.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// Plot of `α` against `log₂ n`, one polyline per measure.
pub fn rate_plot_svg(table: &RateTable) -> Result<String> {
    if table.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot plot an empty rate table".into(),
        ));
    }
    let (left, right, top, bottom) = (70.0, 220.0, 30.0, 60.0);
    let plot_w = SVG_WIDTH - left - right;
    let plot_h = SVG_HEIGHT - top - bottom;

    let xs: Vec<f64> = table.rows.iter().map(|r| (r.n as f64).log2()).collect();
    let ys: Vec<f64> = table.rows.iter().map(|r| r.alpha).collect();
    let (mut x0, mut x1) = bounds(&xs);
    let (mut y0, mut y1) = bounds(&ys);
    if x1 - x0 < 1.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let pad = ((y1 - y0) * 0.1).max(0.05);
    y0 -= pad;
    y1 += pad;
    let px = |x: f64| left + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| top + (y1 - y) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    let x_ticks = (x0.ceil() as i64)..=(x1.floor() as i64);
    for k in x_ticks {
        let x = px(k as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ccc"/><text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle">{k}</text>"##,
            top,
            top + plot_h,
            top + plot_h + 18.0
        );
    }
    for i in 0..=5 {
        let y = y0 + (y1 - y0) * i as f64 / 5.0;
        let yy = py(y);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#eee"/><text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{y:.3}</text>"##,
            left + plot_w,
            left - 6.0,
            yy + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">log2(n)</text>"#,
        left + plot_w / 2.0,
        SVG_HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 18 {:.2})">alpha</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );

    for (i, measure) in table.measures().into_iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| r.measure == measure)
            .map(|r| (px((r.n as f64).log2()), py(r.alpha)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let list: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            list.join(" ")
        );
        for (x, y) in &pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#
            );
        }
        let ly = top + 20.0 + 22.0 * i as f64;
        let lx = left + plot_w + 20.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="13">{measure}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_rate_plot_svg(table: &RateTable, path: &Path) -> Result<()> {
    let svg = rate_plot_svg(table)?;
    write_file(path, &svg)
}

fn bounds(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Parses `key = value` lines; `#` starts a comment. Later keys override earlier ones.
pub fn parse_config(text: &str, path: &Path, allowed: &[&str]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found {line:?}")))?;
        let key = key.trim();
        if !allowed.contains(&key) {
            return Err(err(format!(
                "unknown key {key:?}; valid keys: {}",
                allowed.join(", ")
            )));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub fn read_config(path: &Path, allowed: &[&str]) -> Result<BTreeMap<String, String>> {
    parse_config(&read_file(path)?, path, allowed)
}
