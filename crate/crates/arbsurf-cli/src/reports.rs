//! Report CSVs. All values are written with Rust's shortest round-trip
//! float formatting, so files are deterministic for identical runs and
//! lossless to reparse.

use std::path::Path;

use anyhow::{Context, Result};

/// Writes a CSV with the given header and preformatted rows (newline
/// terminated, UTF-8), creating parent directories as needed.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut text = String::with_capacity(header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
