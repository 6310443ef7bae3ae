//! Helpers shared by the subcommands: config loading with path-aware
//! errors, the resolved-config echo, and volume-directory I/O.

use std::fs;
use std::path::{Path, PathBuf};

use cdpm::data::{load_volume, Volume};
use cdpm::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Prefix file-level failures with the path involved so every error message
/// names its file.
pub fn at_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(io) => {
            Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display())))
        }
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Read a JSON config file, or fall back to defaults when no path is given.
/// Parse failures are usage errors and carry the file name.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| at_path(e.into(), path))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Write the fully-resolved run config as canonical JSON. Re-running the
/// subcommand from this file reproduces the run's outputs bit-exactly.
pub fn write_config_echo<T: Serialize>(config: &T, path: &Path) -> Result<()> {
    let mut text = cdpm::canon::canonical_json(config)?;
    text.push('\n');
    cdpm::fsutil::write_atomic(path, text.as_bytes())
}

/// All `.vol` files in `dir` in file-name order, so every run sees the same
/// sequence regardless of directory enumeration order.
pub fn volume_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| at_path(e.into(), dir))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "vol"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!("no .vol volumes in {}", dir.display())));
    }
    Ok(paths)
}

/// Load every volume under `dir` (see [`volume_paths`] for the order).
pub fn load_volume_dir(dir: &Path) -> Result<Vec<Volume>> {
    volume_paths(dir)?
        .iter()
        .map(|p| load_volume(p).map_err(|e| at_path(e, p)))
        .collect()
}

/// Zero-padded volume file name: `vol_007.vol`.
pub fn volume_file_name(index: usize) -> String {
    format!("vol_{index:03}.vol")
}

/// Create the output directory (and parents) if it does not exist yet.
pub fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| at_path(e.into(), dir))
}

/// A config field that must be set either in the file or by a flag.
pub fn require<T>(value: Option<T>, what: &str, flag: &str) -> Result<T> {
    value.ok_or_else(|| {
        Error::InvalidConfig(format!("missing {what}: pass {flag} or set it in the config file"))
    })
}
