//! Metric-record CSV export and the column table that plots are drawn from.

use std::path::Path;

use infoplay_train::checkpoint::write_atomic;
use infoplay_train::MetricRecord;

use crate::error::OutputError;

pub const CSV_HEADER: &str = "step,lr,train_loss,train_acc,test_acc,h_f,h_v,mi,mir,hdr,mask_fraction,aux_loss";

/// `%.9g`-style formatting: 9 significant digits, trailing zeros trimmed,
/// scientific notation outside `[1e-5, 1e9)`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format_sig9(x),
        _ => String::new(),
    }
}

fn row_values(r: &MetricRecord) -> [Option<f64>; 11] {
    let info = r.info;
    [
        Some(r.lr),
        Some(r.train_loss),
        Some(r.train_acc),
        Some(r.test_acc),
        info.map(|i| i.h1),
        info.map(|i| i.h2),
        info.map(|i| i.mi),
        info.and_then(|i| i.mir),
        info.and_then(|i| i.hdr),
        r.mask_fraction,
        r.aux_loss,
    ]
}

pub fn metrics_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.step.to_string());
        for v in row_values(r) {
            out.push(',');
            out.push_str(&cell(v));
        }
        out.push('\n');
    }
    out
}

pub fn write_metrics_csv(records: &[MetricRecord], path: &Path) -> Result<(), OutputError> {
    write_file(path, metrics_csv(records).as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    write_atomic(path, bytes).map_err(|e| match e {
        infoplay_train::TrainError::Io(io) => OutputError::Io(io),
        other => OutputError::Io(std::io::Error::other(other.to_string())),
    })
}

/// Named numeric columns keyed by a shared x column; empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn from_records(records: &[MetricRecord]) -> Self {
        parse_table(&metrics_csv(records)).expect("own csv parses")
    }

    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>, OutputError> {
        let k = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| OutputError::UnknownField(name.into()))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn parse_table(text: &str) -> Result<Table, OutputError> {
    let bad = |line: usize, reason: String| OutputError::BadCsv { line, reason };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != names.len() {
            return Err(bad(i + 1, format!("expected {} fields, found {}", names.len(), cells.len())));
        }
        let row = cells
            .iter()
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>().map(Some).map_err(|_| bad(i + 1, format!("bad number `{c}`")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Table { names, rows })
}
