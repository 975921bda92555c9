//! Output emission: stdout or an atomic temp-file-and-rename write.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
        Some(p) => write_atomic(p, bytes),
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// `# `-prefixed lines: the column/unit line first, then the echo.
pub fn csv_preamble(columns: &str, echo: &[String]) -> String {
    let mut s = format!("# columns: {columns}\n");
    for line in echo {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s
}

pub fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("JSON value serializes");
    s.push('\n');
    s.into_bytes()
}
