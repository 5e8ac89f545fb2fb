//! CSV, SVG and manifest writers for result rows. All output is a pure
//! function of the rows, so identical rows give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::Value;

use super::{Method, ResultRow, EMBEDDING_SOURCE};
use crate::error::{invalid, Result};

pub const CSV_HEADER: &str = "axis,axis_value,method,config_digest,prompt,in_batch_sim,vendi,\
mean_in_batch_sim,mean_vendi,kid,perturbation_energy";

/// `x` with six significant digits, formatted like C's `%.6g`.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent format always has an 'e'");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{:.*}", (5 - exp) as usize, x))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_sig6).unwrap_or_default()
}

/// Header plus one line per row, LF-terminated.
pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.axis,
            r.axis_value,
            r.method,
            r.config_digest,
            r.prompt,
            opt(r.in_batch_sim),
            opt(r.vendi),
            opt(r.mean_in_batch_sim),
            opt(r.mean_vendi),
            opt(r.kid),
            format_sig6(r.perturbation_energy),
        );
    }
    out
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    fs::write(path, csv_string(rows))?;
    Ok(())
}

fn metric(row: &ResultRow, name: &str) -> Result<Option<f64>> {
    Ok(match name {
        "in_batch_sim" => row.in_batch_sim,
        "vendi" => row.vendi,
        "mean_in_batch_sim" => row.mean_in_batch_sim,
        "mean_vendi" => row.mean_vendi,
        "kid" => row.kid,
        "perturbation_energy" => Some(row.perturbation_energy),
        other => return invalid(format!("unknown metric '{other}'")),
    })
}

struct Point {
    method: Method,
    x: f64,
    y: f64,
}

/// One point per (method, axis value, config): the mean of each metric over
/// that group's prompt rows.
fn points(rows: &[ResultRow], x_metric: &str, y_metric: &str) -> Result<Vec<Point>> {
    let mut groups: Vec<(&ResultRow, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let (Some(x), Some(y)) = (metric(r, x_metric)?, metric(r, y_metric)?) else {
            return invalid(format!(
                "row for {} prompt {} lacks metric '{x_metric}' or '{y_metric}'",
                r.method, r.prompt
            ));
        };
        let same = |g: &ResultRow| {
            g.method == r.method
                && g.axis == r.axis
                && g.axis_value == r.axis_value
                && g.config_digest == r.config_digest
        };
        match groups.iter_mut().find(|(g, _)| same(g)) {
            Some((_, values)) => values.push((x, y)),
            None => groups.push((r, vec![(x, y)])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(r, values)| {
            let n = values.len() as f64;
            Point {
                method: r.method,
                x: values.iter().map(|v| v.0).sum::<f64>() / n,
                y: values.iter().map(|v| v.1).sum::<f64>() / n,
            }
        })
        .collect())
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 4] = ["#4d4d4d", "#1f77b4", "#ff7f0e", "#d62728"];

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if span > 0.0 {
        (lo - 0.05 * span, hi + 0.05 * span)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn marker(out: &mut String, method: Method, x: f64, y: f64) {
    let color = COLORS[method as usize];
    let _ = match method {
        Method::Baseline => writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{color}"/>"#),
        Method::InputNoise => writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="9" height="9" fill="{color}"/>"#,
            x - 4.5,
            y - 4.5
        ),
        Method::NoPca => writeln!(
            out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            x,
            y - 6.0,
            x - 5.5,
            y + 4.5,
            x + 5.5,
            y + 4.5
        ),
        Method::Stride => writeln!(
            out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            x,
            y - 6.0,
            x + 6.0,
            y,
            x,
            y + 6.0,
            x - 6.0,
            y
        ),
    };
}

/// Static scatter of `y_metric` against `x_metric`, one series per method.
pub fn pareto_svg(rows: &[ResultRow], x_metric: &str, y_metric: &str) -> Result<String> {
    if rows.is_empty() {
        return invalid("no rows to plot");
    }
    let pts = points(rows, x_metric, y_metric)?;
    let (x0, x1) = padded_range(pts.iter().map(|p| p.x));
    let (y0, y1) = padded_range(pts.iter().map(|p| p.y));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let base = TOP + plot_h;
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{base}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
            base + 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            base + 16.0,
            format_sig6(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"#,
            LEFT - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py + 4.0,
            format_sig6(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_metric} ({EMBEDDING_SOURCE})</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{y_metric} ({EMBEDDING_SOURCE})</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    let mut legend_row = 0;
    for method in Method::ALL {
        let series: Vec<&Point> = pts.iter().filter(|p| p.method == method).collect();
        if series.is_empty() {
            continue;
        }
        let _ = writeln!(out, r#"<g class="series" id="{method}">"#);
        for p in series {
            marker(&mut out, method, sx(p.x), sy(p.y));
        }
        out.push_str("</g>\n");
        let ly = TOP + 10.0 + 20.0 * legend_row as f64;
        let lx = WIDTH - RIGHT + 20.0;
        marker(&mut out, method, lx, ly);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{method}</text>"#, lx + 12.0, ly + 4.0);
        legend_row += 1;
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_pareto_svg(rows: &[ResultRow], x_metric: &str, y_metric: &str, path: &Path) -> Result<()> {
    let svg = pareto_svg(rows, x_metric, y_metric)?;
    fs::write(path, svg)?;
    Ok(())
}

/// Writes `manifest.json`: the resolved config echoed back with the tool
/// version and any run details.
pub fn write_manifest(dir: &Path, config: &Value, details: Value) -> Result<()> {
    let manifest = serde_json::json!({
        "tool": "stride",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "run": details,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("JSON values always serialize");
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}
