//! Output files and exit-code policy.
//!
//! Every command writes one CSV-with-manifest file atomically (temp file
//! plus rename, so a crash never leaves a truncated output) and prints a
//! single summary line on stdout. Failures map to fixed exit codes:
//! 2 for configuration and usage errors, 3 for numerical failures on
//! valid input, 4 for internal errors.

use std::path::Path;

/// A command failure with its exit code.
#[derive(Debug)]
pub enum CliErr {
    /// Invalid configuration or arguments: exit 2.
    Config(String),
    /// A numerical method failed on valid input: exit 3.
    Numerical(String),
    /// Unexpected internal failure: exit 4.
    Internal(String),
}

impl CliErr {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliErr::Config(_) => 2,
            CliErr::Numerical(_) => 3,
            CliErr::Internal(_) => 4,
        }
    }

    /// Message for stderr.
    pub fn message(&self) -> &str {
        match self {
            CliErr::Config(m) | CliErr::Numerical(m) | CliErr::Internal(m) => m,
        }
    }
}

impl From<tfqkd::Error> for CliErr {
    fn from(e: tfqkd::Error) -> Self {
        match e {
            // a bracket with several sign changes is a numerical outcome,
            // not a malformed request
            tfqkd::Error::AmbiguousCrossover { .. } => CliErr::Numerical(e.to_string()),
            tfqkd::Error::InvalidParameter { .. } | tfqkd::Error::InvalidGrid(_) => {
                CliErr::Config(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliErr {
    fn from(e: std::io::Error) -> Self {
        CliErr::Internal(format!("io error: {e}"))
    }
}

/// Writes `content` to `path` via a temp file in the same directory and a
/// final rename.
pub fn write_atomic(path: &Path, content: &str) -> Result<(), CliErr> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let name = path
        .file_name()
        .ok_or_else(|| CliErr::Config(format!("output path {} has no file name", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = match dir {
        Some(d) => d.join(format!(".{name}.tmp")),
        None => Path::new(&format!(".{name}.tmp")).to_path_buf(),
    };
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Joins CSV cells; all values are numeric or fixed identifiers, so no
/// quoting is needed.
pub fn csv_row(cells: &[String]) -> String {
    let mut row = cells.join(",");
    row.push('\n');
    row
}

/// Formats an f64 with full round-trip precision.
pub fn num(v: f64) -> String {
    format!("{v}")
}
