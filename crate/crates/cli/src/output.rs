use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use untangle::Error;

use crate::CliError;

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, item).map_err(Error::from)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(Error::from)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        Ok(())
    })
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), CliError> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        for row in rows {
            out.serialize(row).map_err(|e| CliError::Csv(path.to_path_buf(), e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    })
}

/// JSON result of a command: written to `out` when given, printed otherwise.
pub fn emit(out: Option<&Path>, value: impl Serialize, no_timestamp: bool) -> Result<(), CliError> {
    let mut value = serde_json::to_value(value).map_err(Error::from)?;
    if !no_timestamp {
        if let Value::Object(map) = &mut value {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            map.insert("generated_at".into(), secs.into());
        }
    }
    match out {
        Some(path) => write_json(path, &value),
        None => {
            let text = serde_json::to_string_pretty(&value).map_err(Error::from)?;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e).into()),
                _ => Ok(()),
            }
        }
    }
}

/// `dir/stem{suffix}` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

/// `dir/name` in the directory of `path`.
pub fn beside(path: &Path, name: &str) -> PathBuf {
    path.with_file_name(name)
}
