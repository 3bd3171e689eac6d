use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use flowcurv_core::export::csv_to_json;

use crate::{Format, OutputArgs};

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write to {}", dir.display()))?;
    tmp.write_all(text.as_bytes())?;
    tmp.persist(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    Ok(())
}

pub fn emit_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Emits a CSV table, or its JSON mirror.
pub fn emit_table(out: &OutputArgs, csv: &str) -> Result<()> {
    match out.format {
        Format::Csv => emit_text(out.output.as_deref(), csv),
        Format::Json => emit_text(out.output.as_deref(), &csv_to_json(csv)),
    }
}
