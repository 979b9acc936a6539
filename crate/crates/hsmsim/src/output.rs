//! CSV emission. One file per scenario, named after its id.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::SimError;
use crate::runner::ScenarioResult;

pub const HEADER: [&str; 5] = ["scenario", "sweep", "path", "throughput_MBps", "makespan_s"];

/// Writes the CSV body for one result; MB means 10^6 bytes.
pub fn write_rows<W: Write>(out: W, result: &ScenarioResult) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in &result.rows {
        w.write_record([
            r.scenario.clone(),
            r.sweep.to_string(),
            r.path.clone(),
            format!("{:.6}", r.throughput() / 1e6),
            format!("{:.6}", r.makespan),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(dir: &Path, result: &ScenarioResult) -> Result<PathBuf, SimError> {
    fs::create_dir_all(dir).map_err(|source| SimError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(format!("{}.csv", result.id));
    let file = fs::File::create(&path).map_err(|source| SimError::Io {
        path: path.clone(),
        source,
    })?;
    write_rows(file, result).map_err(|source| SimError::Csv {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
