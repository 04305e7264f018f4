//! CSV tables: optimization history, surface profiles, sweep summary and
//! identification result.

use std::path::Path;

use distopt_core::optimizer::IterationRecord;
use distopt_core::OptHistory;

use crate::error::CliError;

pub const HISTORY_HEADER: [&str; 7] = ["iter", "F", "F_MC", "F_AM", "volume", "lambda", "wall_ms"];
pub const PROFILE_HEADER: [&str; 2] = ["x", "u_y"];
pub const SUMMARY_HEADER: [&str; 3] = ["gamma", "F_MC", "F_AM"];
pub const IDENTIFY_HEADER: [&str; 2] = ["epsilon", "residual"];

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::config(format!("{}: {other:?}", path.display())),
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn history_row(r: &IterationRecord, wall: bool) -> Vec<String> {
    vec![
        r.iter.to_string(),
        num(r.objective),
        num(r.compliance),
        num(r.distortion),
        num(r.volume),
        num(r.lambda),
        num(if wall { r.wall_ms } else { 0.0 }),
    ]
}

/// With `wall = false` the wall-time column is written as zero, which makes
/// the file reproducible byte for byte.
pub fn write_history(path: &Path, history: &OptHistory, wall: bool) -> Result<(), CliError> {
    write_rows(path, &HISTORY_HEADER, history.records.iter().map(|r| history_row(r, wall)))
}

pub fn write_profile(path: &Path, profile: &[(f64, f64)]) -> Result<(), CliError> {
    write_rows(path, &PROFILE_HEADER, profile.iter().map(|&(x, u)| vec![num(x), num(u)]))
}

/// Reads a two-column numeric CSV. A first row that does not parse as
/// numbers is taken as a header.
pub fn read_profile(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != 2 {
            return Err(CliError::config(format!(
                "{}: row {} has {} columns, expected 2",
                path.display(),
                k + 1,
                rec.len()
            )));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(u)) => out.push((x, u)),
            _ if k == 0 => {}
            _ => {
                return Err(CliError::config(format!(
                    "{}: row {} is not numeric",
                    path.display(),
                    k + 1
                )))
            }
        }
    }
    Ok(out)
}

pub fn write_summary(path: &Path, rows: &[(f64, f64, f64)]) -> Result<(), CliError> {
    write_rows(path, &SUMMARY_HEADER, rows.iter().map(|&(g, mc, am)| vec![num(g), num(mc), num(am)]))
}

pub fn write_identification(path: &Path, strain: f64, residual: f64) -> Result<(), CliError> {
    write_rows(path, &IDENTIFY_HEADER, [vec![num(strain), num(residual)]])
}
