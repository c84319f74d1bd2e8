//! Runs every reproducible experiment of `configs/tiny.json` into a
//! temporary directory, then resumes from the checkpoints and checks the
//! report comes out byte for byte the same.

use std::path::Path;

use cplm::harness::pipeline::{full_report, Session};
use cplm::harness::{emit_report, ExperimentConfig};

fn main() -> cplm::Result<()> {
    let cfg = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/tiny.json"))?;
    let dir = tempfile::tempdir()?;

    let mut session = Session::new(cfg.clone(), dir.path(), false)?;
    let table = full_report(&mut session)?;
    emit_report(&table, dir.path())?;
    print!("{}", table.to_markdown());

    let mut resumed = Session::new(cfg, dir.path(), true)?;
    assert_eq!(full_report(&mut resumed)?.to_csv(), std::fs::read_to_string(dir.path().join("report.csv"))?);
    println!("\nresumed run reproduced report.csv from {}", dir.path().display());
    Ok(())
}
