//! Report writers: CSV with LF line endings and round-trip float text.

use std::io::Write;
use std::path::Path;

use crate::Failure;
use crate::EXIT_SOLVER;

/// Round-trip decimal formatting; Rust's shortest representation parses
/// back to the identical f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::new(EXIT_SOLVER, format!("cannot write {}: {e}", path.display())))
}

/// Writes a CSV file: header row plus data rows, UTF-8, LF-terminated.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), Failure> {
    let mut text = String::with_capacity(header.len() + rows.iter().map(|r| r.len() + 1).sum::<usize>() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    write_text(path, &text)
}

/// Confirms the output directory exists and is writable before a long run.
pub fn ensure_writable_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::new(EXIT_SOLVER, format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".write_probe");
    std::fs::File::create(&probe)
        .and_then(|mut f| f.write_all(b"ok"))
        .map_err(|e| Failure::new(EXIT_SOLVER, format!("{} is not writable: {e}", dir.display())))?;
    let _ = std::fs::remove_file(&probe);
    Ok(())
}

pub fn join_floats(values: impl IntoIterator<Item = f64>, sep: char) -> String {
    let mut out = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(sep);
        }
        out.push_str(&fmt_f64(v));
    }
    out
}
