//! Tabular experiment reports and their CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exceptional::EnEstimate;
use crate::stream::StreamSeed;

pub const REPORT_HEADER: &str = "name,param,trials,estimate,ci_lo,ci_hi,censored,seed,z";

/// One estimate with its interval; NaN marks an undefined field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub param: String,
    pub trials: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub censored: u64,
    pub seed: StreamSeed,
    pub z: f64,
}

impl ReportRow {
    pub fn from_en(name: &str, e: &EnEstimate) -> Self {
        ReportRow {
            name: name.to_string(),
            param: format!("n={}", e.n),
            trials: e.trials,
            estimate: e.p_hat,
            ci_lo: e.ci_lo(),
            ci_hi: e.ci_hi(),
            censored: e.censored,
            seed: e.seed,
            z: f64::NAN,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn single(row: ReportRow) -> Self {
        ExperimentReport { rows: vec![row] }
    }

    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }
}

/// Float with 17 significant digits; reads back bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn fmt_seed(s: &StreamSeed) -> String {
    format!("{}:{}", s.master_seed, s.stream_id)
}

/// Header plus one line per row, LF endings.
pub fn emit_report<W: Write>(report: &ExperimentReport, mut w: W) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.name,
            r.param,
            r.trials,
            fmt_f64(r.estimate),
            fmt_f64(r.ci_lo),
            fmt_f64(r.ci_hi),
            r.censored,
            fmt_seed(&r.seed),
            fmt_f64(r.z)
        )?;
    }
    Ok(())
}

/// Parse the CSV written by [`emit_report`]; lines starting with `#` are
/// comments.
pub fn parse_report(text: &str) -> Result<ExperimentReport> {
    use crate::error::Error;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some(h) if h == REPORT_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected report header {other:?}"))),
    }
    let num = |s: &str| -> Result<f64> {
        match s {
            "NaN" => Ok(f64::NAN),
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            _ => s.parse().map_err(|e| Error::Parse(format!("{s:?}: {e}"))),
        }
    };
    let int = |s: &str| -> Result<u64> { s.parse().map_err(|e| Error::Parse(format!("{s:?}: {e}"))) };
    let mut rep = ExperimentReport::default();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Parse(format!("expected 9 fields in {line:?}")));
        }
        let (m, s) = f[7].split_once(':').ok_or_else(|| Error::Parse(format!("bad seed {:?}", f[7])))?;
        rep.push(ReportRow {
            name: f[0].to_string(),
            param: f[1].to_string(),
            trials: int(f[2])?,
            estimate: num(f[3])?,
            ci_lo: num(f[4])?,
            ci_hi: num(f[5])?,
            censored: int(f[6])?,
            seed: StreamSeed::new(int(m)?, int(s)?),
            z: num(f[8])?,
        });
    }
    Ok(rep)
}
