//! Small filesystem helpers shared by volume, checkpoint, and report I/O.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::Result;

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Write `bytes` to `path` atomically: the data lands in a temporary file in
/// the same directory, which is renamed over the target only after a
/// successful write. Readers never observe a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| crate::Error::InvalidConfig(format!("not a file path: {}", path.display())))?;
    let nonce = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp_name = format!(
        ".{}.{}.{}.tmp",
        file_name.to_string_lossy(),
        std::process::id(),
        nonce
    );
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => std::path::PathBuf::from(&tmp_name),
    };
    let write_then_rename = (|| {
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path)
    })();
    if write_then_rename.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    write_then_rename.map_err(Into::into)
}
