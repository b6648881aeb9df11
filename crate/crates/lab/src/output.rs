//! CSV and JSON writers. Floats are written with 17 significant digits and
//! rows in a fixed order, so identical runs give identical files.

use homlab_core::estimates::BoundReport;
use homlab_core::experiments::ExperimentReport;
use homlab_core::grid::GridFunction;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

pub fn fmt(v: f64) -> String {
    // one spelling for zero
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn writer(path: &Path) -> io::Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

/// Side record of a grid CSV.
#[derive(Serialize)]
struct GridMeta {
    #[serde(rename = "N")]
    n: usize,
    dim: usize,
    m: usize,
    t: f64,
}

/// `i,x1[,x2],value` (or `value_0..value_{m-1}` for systems) plus
/// `<stem>.meta.json` with `{N, dim, m, t}`.
pub fn write_grid_csv(path: &Path, u: &GridFunction) -> io::Result<()> {
    let g = u.grid();
    let mut w = writer(path)?;
    let mut header = vec!["i".to_string(), "x1".to_string()];
    if g.dim() == 2 {
        header.push("x2".to_string());
    }
    if u.m() == 1 {
        header.push("value".to_string());
    } else {
        header.extend((0..u.m()).map(|i| format!("value_{i}")));
    }
    w.write_record(&header)?;
    for idx in 0..g.len() {
        let x = g.coords(idx);
        let mut row = vec![idx.to_string(), fmt(x[0])];
        if g.dim() == 2 {
            row.push(fmt(x[1]));
        }
        row.extend(u.components().iter().map(|c| fmt(c[idx])));
        w.write_record(&row)?;
    }
    w.flush()?;
    let meta = GridMeta { n: g.n(), dim: g.dim(), m: u.m(), t: u.t() };
    write_json(&meta_path(path), &meta)
}

pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

pub fn write_bound_reports(path: &Path, reports: &[BoundReport]) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["check", "t", "observed", "rhs", "fitted_K", "pass", "slack"])?;
    for r in reports {
        w.write_record([r.check.clone(), fmt(r.t), fmt(r.observed), fmt(r.rhs), opt(r.fitted_k), r.pass.to_string(), fmt(r.slack)])?;
    }
    w.flush()
}

pub fn write_experiment_report(path: &Path, rep: &ExperimentReport) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["study", "scenario", "param", "error", "fitted_exponent", "residual", "pass"])?;
    for row in &rep.rows {
        w.write_record([
            rep.study.clone(),
            rep.scenario.clone(),
            fmt(row.param),
            fmt(row.error),
            opt(rep.fit.map(|f| f.exponent)),
            opt(rep.fit.map(|f| f.residual)),
            rep.pass.to_string(),
        ])?;
    }
    w.flush()
}

/// Generic table with a header and preformatted cells.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

/// Run record written next to every command's outputs. Wall time is kept
/// out of it (see [`Timing`]) so that manifests are reproducible.
#[derive(Serialize, Default)]
pub struct Manifest {
    pub command: String,
    pub scenario: String,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub dim: usize,
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    pub eps_visc: Option<f64>,
    pub eps_fast: Option<String>,
    pub seed: u64,
    pub files: Vec<String>,
    pub results: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize)]
pub struct Timing {
    pub command: String,
    pub threads: usize,
    pub wall_time_s: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use homlab_core::grid::SpaceGrid;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt(-0.0), "0.0000000000000000e0");
        assert_eq!(fmt(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn grid_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let g = SpaceGrid::new(2, 4).unwrap();
        let u = GridFunction::from_fn(g, 2, 0.25, |i, x| i as f64 + x[0]);
        let p = dir.path().join("u.csv");
        write_grid_csv(&p, &u).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("i,x1,x2,value_0,value_1\n"));
        assert_eq!(text.lines().count(), 17);
        let meta = std::fs::read_to_string(meta_path(&p)).unwrap();
        assert!(meta.contains("\"N\": 4") && meta.contains("\"t\": 0.25"));
    }
}
