//! Static dual-axis line plots: accuracies on the left axis, everything
//! else (MIR, HDR, losses, ...) on the right.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::OutputError;
use crate::export::{write_file, Table};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 64.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, Option<f64>)>,
}

impl Series {
    fn left_axis(&self) -> bool {
        self.name.ends_with("_acc") || self.name == "accuracy"
    }
}

pub fn series_from_table(table: &Table, x: &str, fields: &[&str]) -> Result<Vec<Series>, OutputError> {
    let xs = table.column(x)?;
    fields
        .iter()
        .map(|&f| {
            let ys = table.column(f)?;
            Ok(Series {
                name: f.to_string(),
                points: xs
                    .iter()
                    .zip(ys)
                    .filter_map(|(x, y)| x.map(|x| (x, y)))
                    .collect(),
            })
        })
        .collect()
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of<'a>(values: impl Iterator<Item = &'a f64>, floor: (f64, f64)) -> Self {
        let (mut lo, mut hi) = floor;
        for &v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo < 1e-12 {
            hi = lo + 1.0;
        }
        Range { lo, hi }
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }
}

/// Contiguous runs of defined points; a missing value breaks the line.
fn segments(points: &[(f64, Option<f64>)]) -> Vec<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for &(x, y) in points {
        match y {
            Some(y) if y.is_finite() => cur.push((x, y)),
            _ => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn render_svg(series: &[Series], x_label: &str) -> Result<String, OutputError> {
    if series.is_empty() {
        return Err(OutputError::EmptySeries("no fields selected".into()));
    }
    let defined = |s: &Series| s.points.iter().filter_map(|p| p.1.filter(|v| v.is_finite()).map(|y| (p.0, y))).collect::<Vec<_>>();
    let all: Vec<(bool, Vec<(f64, f64)>)> = series.iter().map(|s| (s.left_axis(), defined(s))).collect();
    if all.iter().all(|(_, pts)| pts.is_empty()) {
        return Err(OutputError::EmptySeries("every selected field is empty".into()));
    }
    let xr = Range::of(series.iter().flat_map(|s| s.points.iter().map(|p| &p.0)), (f64::INFINITY, f64::NEG_INFINITY));
    let left = Range::of(all.iter().filter(|a| a.0).flat_map(|a| a.1.iter().map(|p| &p.1)), (0.0, 1.0));
    let right = Range::of(all.iter().filter(|a| !a.0).flat_map(|a| a.1.iter().map(|p| &p.1)), (0.0, 1.0));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + xr.frac(x) * pw;
    let py = |r: &Range, y: f64| TOP + (1.0 - r.frac(y)) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
        w = WIDTH,
        h = HEIGHT
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        num(pw),
        num(ph)
    )
    .unwrap();
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let y = TOP + (1.0 - t) * ph;
        let x = LEFT + t * pw;
        writeln!(s, r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##, num(LEFT + pw), y = num(y)).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, num(LEFT - 6.0), num(y + 4.0), tick_label(left.lo + t * (left.hi - left.lo))).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="start">{}</text>"#, num(LEFT + pw + 6.0), num(y + 4.0), tick_label(right.lo + t * (right.hi - right.lo))).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, num(x), num(TOP + ph + 16.0), tick_label(xr.lo + t * (xr.hi - xr.lo))).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, num(LEFT + pw / 2.0), num(HEIGHT - 10.0), escape(x_label)).unwrap();
    writeln!(s, r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">accuracy</text>"#, num(TOP + ph / 2.0), num(TOP + ph / 2.0)).unwrap();
    let rx = WIDTH - 12.0;
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(90 {} {})">value</text>"#, num(rx), num(TOP + ph / 2.0), num(rx), num(TOP + ph / 2.0)).unwrap();

    for (k, (ser, (on_left, _))) in series.iter().zip(&all).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let r = if *on_left { &left } else { &right };
        let dash = if *on_left { "" } else { r#" stroke-dasharray="6 3""# };
        for seg in segments(&ser.points) {
            if seg.len() == 1 {
                let (x, y) = seg[0];
                writeln!(s, r#"<circle cx="{}" cy="{}" r="2.5" fill="{color}"/>"#, num(px(x)), num(py(r, y))).unwrap();
                continue;
            }
            let pts: Vec<String> = seg.iter().map(|&(x, y)| format!("{},{}", num(px(x)), num(py(r, y)))).collect();
            writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, pts.join(" ")).unwrap();
        }
        let ly = TOP + 14.0 + 14.0 * k as f64;
        let lx = LEFT + 10.0;
        writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"{dash}/>"#, num(lx), num(ly - 4.0), num(lx + 18.0), num(ly - 4.0)).unwrap();
        let axis = if *on_left { "left" } else { "right" };
        writeln!(s, r#"<text x="{}" y="{}">{} ({axis})</text>"#, num(lx + 24.0), num(ly), escape(&ser.name)).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg(series: &[Series], x_label: &str, path: &Path) -> Result<(), OutputError> {
    write_file(path, render_svg(series, x_label)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_series() -> Vec<Series> {
        vec![
            Series {
                name: "test_acc".into(),
                points: vec![(0.0, Some(0.25)), (10.0, Some(0.9))],
            },
            Series {
                name: "mir".into(),
                points: vec![(0.0, Some(0.4)), (10.0, Some(0.7))],
            },
        ]
    }

    #[test]
    fn gaps_split_lines() {
        let pts = vec![(0.0, Some(1.0)), (1.0, Some(2.0)), (2.0, None), (3.0, Some(4.0)), (4.0, Some(5.0))];
        assert_eq!(segments(&pts), vec![vec![(0.0, 1.0), (1.0, 2.0)], vec![(3.0, 4.0), (4.0, 5.0)]]);
        let s = render_svg(&[Series { name: "hdr".into(), points: pts }], "step").unwrap();
        assert_eq!(s.matches("<polyline").count(), 2);
    }

    #[test]
    fn deterministic_output() {
        assert_eq!(render_svg(&two_series(), "step").unwrap(), render_svg(&two_series(), "step").unwrap());
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(render_svg(&[], "step"), Err(OutputError::EmptySeries(_))));
        let blank = Series {
            name: "mir".into(),
            points: vec![(0.0, None)],
        };
        assert!(matches!(render_svg(&[blank], "step"), Err(OutputError::EmptySeries(_))));
    }
}
