//! File formats: JSON-lines trajectories and CSV observable tables.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use aiamd::samplers::{Frame, Observables};
use serde_json::{json, Value};

use crate::error::CliError;

pub const MD_COLUMNS: [&str; 6] = ["step", "time", "H", "K", "V", "T_inst"];
pub const HMC_COLUMNS: [&str; 8] = ["step", "time", "H", "K", "V", "T_inst", "delta_H", "accepted"];

/// Why a run stopped before completing.
#[derive(Debug, Clone)]
pub struct Truncation {
    pub reason: String,
    pub records: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn write_trajectory(path: &Path, header: &Value, frames: &[Frame], truncated: Option<&Truncation>) -> Result<(), CliError> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(w, "{}", json!({ "header": header })).map_err(io)?;
    for f in frames {
        let line = serde_json::to_string(f).map_err(|e| CliError::io(path, e))?;
        writeln!(w, "{line}").map_err(io)?;
    }
    if let Some(t) = truncated {
        writeln!(w, "{}", json!({ "truncated": { "reason": t.reason, "frames": frames.len() } })).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_observables(path: &Path, obs: &Observables, hmc: bool, truncated: Option<&Truncation>) -> Result<(), CliError> {
    let mut buf = create(path)?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let csv_err = |e: csv::Error| CliError::io(path, e);
        let columns: &[&str] = if hmc { &HMC_COLUMNS } else { &MD_COLUMNS };
        w.write_record(columns).map_err(csv_err)?;
        for k in 0..obs.len() {
            let mut row = vec![
                obs.step[k].to_string(),
                obs.time[k].to_string(),
                obs.total[k].to_string(),
                obs.kinetic[k].to_string(),
                obs.potential[k].to_string(),
                obs.temperature[k].to_string(),
            ];
            if hmc {
                row.push(obs.delta_h[k].to_string());
                row.push(u8::from(obs.accepted[k]).to_string());
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    if let Some(t) = truncated {
        writeln!(buf, "# truncated after {} records: {}", t.records, t.reason).map_err(|e| CliError::io(path, e))?;
    }
    buf.flush().map_err(|e| CliError::io(path, e))
}

/// A numeric CSV table with named columns; `#` lines are skipped.
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
        let headers: Vec<String> = r
            .headers()
            .map_err(|e| CliError::io(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for (k, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| CliError::io(path, e))?;
            for (c, field) in rec.iter().enumerate() {
                let v = field
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("{}: row {}: '{field}' is not a number", path.display(), k + 1)))?;
                columns[c].push(v);
            }
        }
        Ok(Self { headers, columns })
    }

    pub fn column(&self, name: &str) -> Result<&[f64], CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|k| self.columns[k].as_slice())
            .ok_or_else(|| CliError::Usage(format!("no column '{name}' (have {})", self.headers.join(", "))))
    }
}

pub struct TrajectoryFile {
    pub header: Value,
    pub frames: Vec<Frame>,
    pub truncated: bool,
}

impl TrajectoryFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut header = Value::Null;
        let mut frames = Vec::new();
        let mut truncated = false;
        for (k, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| CliError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |e: serde_json::Error| CliError::Usage(format!("{}: line {}: {e}", path.display(), k + 1));
            let v: Value = serde_json::from_str(&line).map_err(bad)?;
            if let Some(h) = v.get("header") {
                header = h.clone();
            } else if v.get("truncated").is_some() {
                truncated = true;
            } else {
                frames.push(serde_json::from_value(v).map_err(bad)?);
            }
        }
        Ok(Self {
            header,
            frames,
            truncated,
        })
    }

    pub fn dimension(&self) -> Result<usize, CliError> {
        self.header
            .get("dimension")
            .and_then(Value::as_u64)
            .map(|d| d as usize)
            .ok_or_else(|| CliError::Usage("trajectory header has no dimension".into()))
    }

    pub fn masses(&self) -> Result<Vec<f64>, CliError> {
        self.header
            .get("masses")
            .and_then(Value::as_array)
            .and_then(|a| a.iter().map(Value::as_f64).collect())
            .ok_or_else(|| CliError::Usage("trajectory header has no masses".into()))
    }
}

/// C-style `%g` with `sig` significant digits.
pub fn format_g(x: f64, sig: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= sig as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    }
}
