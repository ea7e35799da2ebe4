//! Output emission: locale-independent float formatting and atomic writes.

use std::fs;
use std::path::Path;

use crate::CliError;

/// Nine significant digits, period decimal separator, no grouping.
/// Positional notation in the ordinary range, scientific outside it.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..=12).contains(&mag) {
        format!("{x:.8e}")
    } else {
        let decimals = (8 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    }
}

/// Write via a sibling temp file and rename, so interrupted runs never
/// leave truncated artifacts.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(parent)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", parent.display())))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::runtime(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}

/// Header-first comma-separated rows.
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            buf: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn write(self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, self.buf.as_bytes())
    }
}
