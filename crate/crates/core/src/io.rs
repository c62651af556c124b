//! CSV artifact schemas: writers and the matching parsers.
//!
//! Every CSV starts with a `# ajd <kind> schema_version=<n>` comment line
//! followed by a header row.

use std::io::{BufRead, BufReader, Read, Write};

use num_complex::Complex64;

use crate::error::{AjdError, Result};
use crate::limits::SCHEMA_VERSION;
use crate::riccati::TransformSolution;
use crate::simulate::{PathSample, SkeletonSample};

fn comment_line(kind: &str) -> String {
    format!("# ajd {kind} schema_version={SCHEMA_VERSION}\n")
}

/// Reads everything, checks the leading comment line and returns the rest.
fn strip_comment<R: Read>(reader: R, kind: &str) -> Result<String> {
    let mut buf = BufReader::new(reader);
    let mut first = String::new();
    buf.read_line(&mut first)?;
    let want = comment_line(kind);
    if first.trim_end() != want.trim_end() {
        return Err(AjdError::Parse(format!(
            "expected '{}' as first line, found '{}'",
            want.trim_end(),
            first.trim_end()
        )));
    }
    let mut rest = String::new();
    buf.read_to_string(&mut rest)?;
    Ok(rest)
}

fn state_headers(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

/// One row of a path CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRow {
    pub path_id: u64,
    pub t: f64,
    pub x: Vec<f64>,
    pub is_jump: bool,
}

/// Parsed path CSV (`path_id, t, x_1..x_d, is_jump`).
#[derive(Debug, Clone, PartialEq)]
pub struct PathTable {
    pub d: usize,
    pub rows: Vec<PathRow>,
}

impl PathTable {
    pub fn path_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.rows.iter().map(|r| r.path_id).collect();
        ids.dedup();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Equally spaced observations of one path as a skeleton. Jump records
    /// are skipped; the spacing must be uniform to a relative `1e-6`.
    pub fn skeleton(&self, path_id: u64) -> Result<SkeletonSample> {
        let rows: Vec<&PathRow> = self.rows.iter().filter(|r| r.path_id == path_id && !r.is_jump).collect();
        if rows.len() < 2 {
            return Err(AjdError::InsufficientData(format!("path {path_id} has fewer than two observations")));
        }
        let delta = rows[1].t - rows[0].t;
        if !(delta > 0.0) {
            return Err(AjdError::Parse("observation times must increase".into()));
        }
        for w in rows.windows(2) {
            if ((w[1].t - w[0].t) - delta).abs() > 1e-6 * delta {
                return Err(AjdError::Parse(format!(
                    "observations are not equally spaced near t = {} (simulate with --delta to get skeleton data)",
                    w[0].t
                )));
            }
        }
        Ok(SkeletonSample {
            d: self.d,
            delta,
            states: rows.iter().flat_map(|r| r.x.iter().copied()).collect(),
            seed: 0,
            dt: 0.0,
        })
    }
}

pub struct PathCsvWriter<W: Write> {
    inner: csv::Writer<W>,
    d: usize,
}

impl<W: Write> PathCsvWriter<W> {
    pub fn new(mut w: W, d: usize) -> Result<Self> {
        w.write_all(comment_line("paths").as_bytes())?;
        let mut inner = csv::Writer::from_writer(w);
        let mut header = vec!["path_id".to_string(), "t".to_string()];
        header.extend(state_headers("x_", d));
        header.push("is_jump".into());
        inner.write_record(&header)?;
        Ok(PathCsvWriter { inner, d })
    }

    pub fn row(&mut self, path_id: u64, t: f64, x: &[f64], is_jump: bool) -> Result<()> {
        debug_assert_eq!(x.len(), self.d);
        let mut rec = vec![path_id.to_string(), t.to_string()];
        rec.extend(x.iter().map(f64::to_string));
        rec.push(u8::from(is_jump).to_string());
        self.inner.write_record(&rec)?;
        Ok(())
    }

    pub fn path(&mut self, p: &PathSample) -> Result<()> {
        for k in 0..p.len() {
            self.row(p.path_index, p.times[k], p.state(k), p.is_jump[k])?;
        }
        Ok(())
    }

    pub fn skeleton(&mut self, path_id: u64, s: &SkeletonSample) -> Result<()> {
        for k in 0..=s.n() {
            self.row(path_id, k as f64 * s.delta, s.state(k), false)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_path_csv<R: Read>(reader: R) -> Result<PathTable> {
    let body = strip_comment(reader, "paths")?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header = rdr.headers()?.clone();
    let n = header.len();
    if n < 4 || &header[0] != "path_id" || &header[1] != "t" || &header[n - 1] != "is_jump" {
        return Err(AjdError::Parse("path CSV header must be path_id,t,x_1..x_d,is_jump".into()));
    }
    let d = n - 3;
    for (i, name) in header.iter().skip(2).take(d).enumerate() {
        if name != format!("x_{}", i + 1) {
            return Err(AjdError::Parse(format!("unexpected column '{name}'")));
        }
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| AjdError::Parse(format!("bad number '{s}'")));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let is_jump = match rec[n - 1].trim() {
            "0" => false,
            "1" => true,
            other => return Err(AjdError::Parse(format!("is_jump must be 0 or 1, found '{other}'"))),
        };
        rows.push(PathRow {
            path_id: rec[0].trim().parse().map_err(|_| AjdError::Parse(format!("bad path id '{}'", &rec[0])))?,
            t: num(&rec[1])?,
            x: (0..d).map(|i| num(&rec[2 + i])).collect::<Result<_>>()?,
            is_jump,
        });
    }
    Ok(PathTable { d, rows })
}

pub fn write_transform_csv<W: Write>(mut w: W, sol: &TransformSolution) -> Result<()> {
    w.write_all(comment_line("transform").as_bytes())?;
    let mut out = csv::Writer::from_writer(w);
    let d = sol.u.len();
    let mut header = vec!["t".to_string(), "phi_re".into(), "phi_im".into()];
    for i in 1..=d {
        header.push(format!("psi_{i}_re"));
        header.push(format!("psi_{i}_im"));
    }
    out.write_record(&header)?;
    for (k, t) in sol.grid.iter().enumerate() {
        let mut rec = vec![t.to_string(), sol.phi[k].re.to_string(), sol.phi[k].im.to_string()];
        for p in &sol.psi[k] {
            rec.push(p.re.to_string());
            rec.push(p.im.to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Parsed transform CSV: time grid, `φ` and `ψ` per time.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformTable {
    pub grid: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub psi: Vec<Vec<Complex64>>,
}

pub fn read_transform_csv<R: Read>(reader: R) -> Result<TransformTable> {
    let body = strip_comment(reader, "transform")?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header = rdr.headers()?.clone();
    let n = header.len();
    if n < 5 || (n - 3) % 2 != 0 || &header[0] != "t" || &header[1] != "phi_re" || &header[2] != "phi_im" {
        return Err(AjdError::Parse("transform CSV header must be t,phi_re,phi_im,psi_i_re,psi_i_im,...".into()));
    }
    let d = (n - 3) / 2;
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| AjdError::Parse(format!("bad number '{s}'")));
    let mut table = TransformTable { grid: vec![], phi: vec![], psi: vec![] };
    for rec in rdr.records() {
        let rec = rec?;
        table.grid.push(num(&rec[0])?);
        table.phi.push(Complex64::new(num(&rec[1])?, num(&rec[2])?));
        table.psi.push(
            (0..d).map(|i| Ok(Complex64::new(num(&rec[3 + 2 * i])?, num(&rec[4 + 2 * i])?))).collect::<Result<_>>()?,
        );
    }
    Ok(table)
}
