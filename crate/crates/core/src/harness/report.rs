use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] =
    ["experiment_id", "corpus", "compression", "prompt_source", "k", "ppl", "nll", "accuracy", "latency_ms"];

/// One completed cell of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment_id: String,
    pub corpus: String,
    pub compression: String,
    /// `none`, `hard`, or `learned:<compression label>[@<corpus>]`.
    pub prompt_source: String,
    pub k: usize,
    pub ppl: Option<f64>,
    pub nll: Option<f64>,
    pub accuracy: Option<f64>,
    pub latency_ms: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: ReportTable) {
        self.rows.extend(other.rows);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// First row matching experiment, corpus, compression and prompt source.
    pub fn find(&self, experiment: &str, corpus: &str, compression: &str, prompt: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.experiment_id == experiment
                && r.corpus == corpus
                && r.compression == compression
                && r.prompt_source == prompt
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = CSV_HEADER.join(",");
        out.push('\n');
        for r in &self.rows {
            let fields = [
                csv_field(&r.experiment_id),
                csv_field(&r.corpus),
                csv_field(&r.compression),
                csv_field(&r.prompt_source),
                r.k.to_string(),
                opt_sig(r.ppl),
                opt_sig(r.nll),
                opt_sig(r.accuracy),
                opt_sig(r.latency_ms),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", CSV_HEADER.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(CSV_HEADER.len()));
        for r in &self.rows {
            let cell = |v: Option<f64>| v.map_or_else(|| "–".to_string(), sig6);
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                r.experiment_id.replace('|', "\\|"),
                r.corpus.replace('|', "\\|"),
                r.compression.replace('|', "\\|"),
                r.prompt_source.replace('|', "\\|"),
                r.k,
                cell(r.ppl),
                cell(r.nll),
                cell(r.accuracy),
                cell(r.latency_ms),
            );
        }
        out
    }
}

/// Decimal rendering with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    // round to 6 significant digits first so 9.9999996 becomes 10.0000, not 10.00000
    let rounded: f64 = format!("{x:.5e}").parse().expect("float formats");
    let exp = rounded.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    format!("{rounded:.decimals$}")
}

fn opt_sig(v: Option<f64>) -> String {
    v.map(sig6).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes `report.csv` and `report.md` into `dir`, replacing earlier copies.
pub fn emit_report(table: &ReportTable, dir: &Path) -> Result<()> {
    if table.is_empty() {
        return Err(Error::Data("refusing to emit an empty report".into()));
    }
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), table.to_csv())?;
    std::fs::write(dir.join("report.md"), table.to_markdown())?;
    Ok(())
}
