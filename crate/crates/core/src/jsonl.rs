//! Line-delimited JSON helpers shared by the dataset, record and corpus files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parses every non-blank line of `path`. Line numbers in errors are 1-based.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_with(path, |line, _| Ok(serde_json::from_str(line)?))
}

/// Like [`read`] but with a caller-supplied per-line parser. JSON errors from
/// the parser are reported as malformed records with their line number; any
/// other error is passed through.
pub fn read_with<T>(path: &Path, mut parse: impl FnMut(&str, usize) -> Result<T>) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = parse(&line, idx + 1).map_err(|e| match e {
            Error::Json(e) => Error::malformed(path, idx + 1, e),
            other => other,
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
