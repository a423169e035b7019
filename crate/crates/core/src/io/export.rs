//! CSV export of archive artifacts with fixed column orders and floats at 17
//! significant digits.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;

use super::archive::write_atomic;
use super::IoError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportKind {
    Trace,
    Checkpoints,
    Census,
    Slice,
}

impl FromStr for ExportKind {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self, IoError> {
        match s {
            "trace" => Ok(ExportKind::Trace),
            "checkpoints" => Ok(ExportKind::Checkpoints),
            "census" => Ok(ExportKind::Census),
            "slice" => Ok(ExportKind::Slice),
            other => Err(IoError::Missing(format!("unknown export kind {other:?}"))),
        }
    }
}

pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn num(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => fmt_float(n.as_f64().unwrap_or(f64::NAN)),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => u8::from(*b).to_string(),
        Value::Null => "nan".into(),
        other => other.to_string(),
    }
}

fn floats(v: &Value) -> Vec<String> {
    v.as_array().map(|a| a.iter().map(|x| fmt_float(x.as_f64().unwrap_or(f64::NAN))).collect()).unwrap_or_default()
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn write_table(path: &Path, t: &Table) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| IoError::Json { path: path.to_path_buf(), message: e.to_string() };
    w.write_record(&t.header).map_err(err)?;
    for r in &t.rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Json { path: path.to_path_buf(), message: e.to_string() })?;
    write_atomic(path, &bytes)
}

fn outputs(archive: &Value) -> Result<&Value, IoError> {
    archive.get("outputs").ok_or_else(|| IoError::Missing("outputs".into()))
}

fn trace_table(trace: &Value) -> Table {
    let header = trace["columns"]
        .as_array()
        .map(|c| c.iter().map(|s| s.as_str().unwrap_or_default().to_string()).collect())
        .unwrap_or_default();
    let rows = trace["samples"].as_array().map(|s| s.iter().map(floats).collect()).unwrap_or_default();
    Table { header, rows }
}

fn traces(out: &Value) -> Vec<(String, &Value)> {
    if let Some(ts) = out.get("traces").and_then(Value::as_array) {
        return ts.iter().enumerate().map(|(i, t)| (format!("trace_{i}.csv"), t)).collect();
    }
    let mut v = Vec::new();
    if let Some(ls) = out.get("lines").and_then(Value::as_array) {
        for (i, l) in ls.iter().enumerate() {
            for dir in ["forward", "backward"] {
                if let Some(t) = l.get(dir) {
                    v.push((format!("line_{i}_{dir}.csv"), t));
                }
            }
        }
    }
    v
}

/// Write the requested artifact as CSV files under `dir`; returns their paths.
pub fn export_csv(archive: &Value, what: ExportKind, dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let out = outputs(archive)?;
    let mut files = Vec::new();
    match what {
        ExportKind::Trace => {
            let ts = traces(out);
            if ts.is_empty() {
                return Err(IoError::Missing("trace: archive has no flow traces".into()));
            }
            for (name, t) in ts {
                let path = dir.join(name);
                write_table(&path, &trace_table(t))?;
                files.push(path);
            }
        }
        ExportKind::Checkpoints => {
            let b = out.get("broken").ok_or_else(|| IoError::Missing("checkpoints: archive has no broken-line report".into()))?;
            let cps = b["checkpoints"].as_array().cloned().unwrap_or_default();
            let params = b["params"].as_array().cloned().unwrap_or_default();
            let levels = b["levels"].as_array().cloned().unwrap_or_default();
            let d = cps.first().and_then(|r| r.get(0)).and_then(Value::as_array).map_or(0, Vec::len);
            let mut header: Vec<String> =
                ["member", "s", "level_index", "level", "to_final"].iter().map(|s| s.to_string()).collect();
            header.extend((0..d).map(|i| format!("x_{i}")));
            let mut rows = Vec::new();
            for (n, row) in cps.iter().enumerate() {
                for (k, x) in row.as_array().into_iter().flatten().enumerate() {
                    let mut r = vec![
                        n.to_string(),
                        num(&params[n]),
                        k.to_string(),
                        num(&levels[k]),
                        num(&b["to_final"][k][n]),
                    ];
                    r.extend(floats(x));
                    rows.push(r);
                }
            }
            let path = dir.join("checkpoints.csv");
            write_table(&path, &Table { header, rows })?;
            files.push(path);
        }
        ExportKind::Census => {
            let cs = out
                .get("censuses")
                .and_then(Value::as_array)
                .filter(|c| !c.is_empty())
                .ok_or_else(|| IoError::Missing("census: archive has no connectivity census".into()))?;
            for (i, c) in cs.iter().enumerate() {
                let g = &c["grid"];
                let n_rho = g["n_rho"].as_u64().unwrap_or(0) as usize;
                let n_theta = g["n_theta"].as_u64().unwrap_or(0) as usize;
                let rho_max = g["rho_max"].as_f64().unwrap_or(f64::NAN);
                let ids = g["component_id"].as_array().cloned().unwrap_or_default();
                let mut rows = Vec::with_capacity(n_rho * n_theta);
                for a in 0..n_rho {
                    for b in 0..n_theta {
                        let id = ids.get(a * n_theta + b).and_then(Value::as_i64).unwrap_or(-1);
                        rows.push(vec![
                            fmt_float(rho_max * a as f64 / (n_rho - 1) as f64),
                            fmt_float(std::f64::consts::TAU * b as f64 / n_theta as f64),
                            u8::from(id >= 0).to_string(),
                            id.to_string(),
                        ]);
                    }
                }
                let header = ["rho", "theta", "in_set", "component_id"].iter().map(|s| s.to_string()).collect();
                let path = dir.join(format!("census_{i}.csv"));
                write_table(&path, &Table { header, rows })?;
                files.push(path);
            }
        }
        ExportKind::Slice => {
            let items = out
                .get("slices")
                .or_else(|| out.get("critical"))
                .and_then(Value::as_array)
                .ok_or_else(|| IoError::Missing("slice: archive has no slice fibers".into()))?;
            let basis_of = |it: &Value| it["slice"]["basis"].as_array().cloned().unwrap_or_default();
            let d = items.iter().flat_map(basis_of).next().and_then(|v| v.as_array().map(Vec::len)).unwrap_or(0);
            let mut header: Vec<String> = ["point", "basis_index", "f_crit"].iter().map(|s| s.to_string()).collect();
            header.extend((0..d).map(|i| format!("c_{i}")));
            let mut rows = Vec::new();
            for it in items.iter().filter(|it| it.get("slice").is_some()) {
                for (k, v) in basis_of(it).iter().enumerate() {
                    let mut r = vec![num(&it["point"]), k.to_string(), num(&it["record"]["f_crit"])];
                    r.extend(floats(v));
                    rows.push(r);
                }
            }
            let path = dir.join("slice.csv");
            write_table(&path, &Table { header, rows })?;
            files.push(path);
        }
    }
    Ok(files)
}
