//! CSV reporting: per-step error records, the enrichment log, and paired
//! comparison of two runs. All floats are written with the shortest exact
//! representation so identical runs produce bit-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::online::EnrichmentEvent;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub n: usize,
    pub t: f64,
    pub e_a: f64,
    pub e_2: f64,
    pub dof: usize,
    pub picard_iters: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ErrorReport {
    pub records: Vec<ErrorRecord>,
}

impl ErrorReport {
    /// Record closest to time `t` (within half a step).
    pub fn at_time(&self, t: f64) -> Option<&ErrorRecord> {
        self.records
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    pub fn final_record(&self) -> Option<&ErrorRecord> {
        self.records.last()
    }
}

pub fn errors_csv(report: &ErrorReport) -> String {
    let mut out = String::from("n,t,e_a,e_2,dof,picard_iters\n");
    for r in &report.records {
        writeln!(out, "{},{},{},{},{},{}", r.n, r.t, r.e_a, r.e_2, r.dof, r.picard_iters)
            .expect("string write");
    }
    out
}

pub fn write_errors_csv(report: &ErrorReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, errors_csv(report)).map_err(|e| Error::io(path, e))
}

pub fn read_errors_csv(path: impl AsRef<Path>) -> Result<ErrorReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty CSV".into()))?;
    if header.trim() != "n,t,e_a,e_2,dof,picard_iters" {
        return Err(perr(1, format!("unexpected header `{header}`")));
    }
    let mut records = Vec::new();
    for (lno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(perr(lno + 1, format!("expected 6 fields, found {}", f.len())));
        }
        let bad = |what: &str| perr(lno + 1, format!("bad {what} `{line}`"));
        records.push(ErrorRecord {
            n: f[0].parse().map_err(|_| bad("step"))?,
            t: f[1].parse().map_err(|_| bad("time"))?,
            e_a: f[2].parse().map_err(|_| bad("e_a"))?,
            e_2: f[3].parse().map_err(|_| bad("e_2"))?,
            dof: f[4].parse().map_err(|_| bad("dof"))?,
            picard_iters: f[5].parse().map_err(|_| bad("picard_iters"))?,
        });
    }
    Ok(ErrorReport { records })
}

pub fn enrichment_csv(events: &[EnrichmentEvent]) -> String {
    let mut out = String::from("n,level,neighborhood,residual_norm,added,dof_after\n");
    for e in events {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            e.step, e.level, e.neighborhood, e.residual_norm, e.added, e.dof_after
        )
        .expect("string write");
    }
    out
}

pub fn write_enrichment_csv(events: &[EnrichmentEvent], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, enrichment_csv(events)).map_err(|e| Error::io(path, e))
}

/// Align two reports on time stamps and emit paired columns. Fails when the
/// time grids differ.
pub fn compare_runs(a: &ErrorReport, b: &ErrorReport) -> Result<String> {
    if a.records.len() != b.records.len() {
        return Err(Error::config(format!(
            "reports have different lengths: {} vs {}",
            a.records.len(),
            b.records.len()
        )));
    }
    let mut out = String::from("n,t,e_a_a,e_a_b,e_2_a,e_2_b,dof_a,dof_b\n");
    for (ra, rb) in a.records.iter().zip(&b.records) {
        if (ra.t - rb.t).abs() > 1e-12 * ra.t.abs().max(1.0) {
            return Err(Error::config(format!(
                "mismatched timestamps at step {}: {} vs {}",
                ra.n, ra.t, rb.t
            )));
        }
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            ra.n, ra.t, ra.e_a, rb.e_a, ra.e_2, rb.e_2, ra.dof, rb.dof
        )
        .expect("string write");
    }
    Ok(out)
}
