//! File helpers shared by the subcommands.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use saeft_core::analysis::{DriftReport, DRIFT_CSV_HEADER};
use saeft_core::ClassEmbeddings;

use crate::error::{CliError, CliResult};

/// Parses a JSON config; unknown keys and type errors are usage errors.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

pub fn save_class_embeddings(path: &Path, emb: &ClassEmbeddings) -> CliResult<()> {
    write_json(path, emb)
}

pub fn load_class_embeddings(path: &Path) -> CliResult<ClassEmbeddings> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let raw: ClassEmbeddings = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("invalid class embeddings {}: {e}", path.display())))?;
    // Re-run the constructor checks that deserialization skips.
    let checked = if raw.is_row_normalized() {
        ClassEmbeddings::normalized(raw.n_classes(), raw.d(), raw.matrix().to_vec())?
    } else {
        ClassEmbeddings::new(raw.n_classes(), raw.d(), raw.matrix().to_vec())?
    };
    Ok(checked)
}

pub fn write_report(report: &DriftReport, json: &Path, csv_path: &Path) -> CliResult<()> {
    write_json(json, report)?;
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(DRIFT_CSV_HEADER)?;
    for rec in report.csv_records() {
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
