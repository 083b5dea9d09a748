//! CSV datasets (`y,r,x_cat,x_cont,z`, empty cells for missing values) and
//! JSON files for draws and reports.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AttemptRecord, Dataset, PosteriorDraw};

pub const CSV_HEADER: [&str; 5] = ["y", "r", "x_cat", "x_cont", "z"];

pub fn read_dataset_from<R: std::io::Read>(reader: R, k: usize) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers != CSV_HEADER {
        return Err(Error::Config(format!(
            "dataset header must be {}, got {}",
            CSV_HEADER.join(","),
            headers.join(",")
        )));
    }
    let records = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<AttemptRecord>, _>>()?;
    let n_levels = records.iter().map(|r| r.x_cat).max().unwrap_or(1).max(1);
    Dataset::new(records, k, n_levels)
}

/// Reads a dataset; the number of covariate levels is the largest level seen.
pub fn read_dataset(path: &Path, k: usize) -> Result<Dataset> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(BufReader::new(f), k)
}

pub fn write_dataset_to<W: Write>(writer: W, dataset: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in &dataset.records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(BufWriter::new(f), dataset)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_draws(path: &Path) -> Result<Vec<PosteriorDraw>> {
    read_json(path)
}

pub fn write_draws(path: &Path, draws: &[PosteriorDraw]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, draws)?;
    w.flush().map_err(|e| Error::io(path, e))
}
