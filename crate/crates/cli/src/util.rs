//! Shared helpers: leveled diagnostics and atomic file writes.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Error = 0,
    Info = 1,
    Debug = 2,
}

static LEVEL: AtomicU8 = AtomicU8::new(0);

/// Read `ASC_LOG` once at startup: error (default), info, or debug.
pub fn init_logging() {
    let level = match std::env::var("ASC_LOG").as_deref() {
        Ok("debug") => Level::Debug,
        Ok("info") => Level::Info,
        _ => Level::Error,
    };
    LEVEL.store(level as u8, Ordering::Relaxed);
}

pub fn enabled(level: Level) -> bool {
    LEVEL.load(Ordering::Relaxed) >= level as u8
}

/// Diagnostics go to stderr so stdout stays clean for data.
macro_rules! info {
    ($($arg:tt)*) => {
        if $crate::util::enabled($crate::util::Level::Info) {
            eprintln!($($arg)*);
        }
    };
}

macro_rules! debug {
    ($($arg:tt)*) => {
        if $crate::util::enabled($crate::util::Level::Debug) {
            eprintln!($($arg)*);
        }
    };
}

pub(crate) use {debug, info};

/// Write via a temp file in the same directory plus rename, so concurrent
/// runs never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp: PathBuf = {
        let mut name = path
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_else(|| "out".into());
        name.push(format!(".tmp-{}", std::process::id()));
        match dir {
            Some(d) => d.join(name),
            None => PathBuf::from(name),
        }
    };
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// Run `job(i)` for every index in `0..count` across `jobs` threads.
/// Indices are claimed from a shared counter; any error aborts the batch.
pub fn for_each_indexed(
    count: usize,
    jobs: usize,
    job: impl Fn(usize) -> asc_core::Result<()> + Sync,
) -> asc_core::Result<()> {
    let jobs = jobs.max(1).min(count.max(1));
    if jobs == 1 {
        for i in 0..count {
            job(i)?;
        }
        return Ok(());
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let failure = std::sync::Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count || failure.lock().unwrap().is_some() {
                    break;
                }
                if let Err(e) = job(i) {
                    failure.lock().unwrap().get_or_insert(e);
                    break;
                }
            });
        }
    });
    match failure.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
