use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Called with the finished temp file just before it replaces the target.
/// Returning an error aborts the write at that point, leaving the temp file
/// behind as a crash would.
pub type FaultHook = Arc<dyn Fn(&Path) -> io::Result<()> + Send + Sync>;

pub(crate) fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Write to `<path>.tmp`, fsync, rename over `path`, fsync the directory.
pub(crate) fn replace_file(path: &Path, contents: &[u8], hook: Option<&FaultHook>) -> io::Result<()> {
    let tmp = temp_path(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    if let Some(hook) = hook {
        hook(&tmp)?;
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        // directory fsync is best effort; not every platform allows it
        if let Ok(d) = fs::File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

/// Removes a temp file left by an interrupted write.
pub(crate) fn discard_stale_temp(path: &Path) {
    let tmp = temp_path(path);
    if tmp.exists() {
        log::warn!("discarding interrupted write {}", tmp.display());
        let _ = fs::remove_file(tmp);
    }
}
