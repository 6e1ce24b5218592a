use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Version of every JSON document this tool writes.
pub const SCHEMA_VERSION: u32 = 1;

fn open(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            File::create(p).map_err(|e| CliError::io(Some(p), e))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Adds `schema_version` to a JSON object and writes it pretty-printed with
/// sorted keys.
pub fn write_json(mut doc: Value, path: Option<&Path>) -> Result<(), CliError> {
    if let Value::Object(map) = &mut doc {
        map.insert("schema_version".into(), SCHEMA_VERSION.into());
    }
    let mut w = open(path)?;
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::io(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Writes `rows` as CSV with a header taken from the field names of `T`.
pub fn write_csv<T: Serialize>(rows: &[T], path: Option<&Path>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(open(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
