//! Writing artifacts, all or nothing.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::run::Artifact;

/// Writes every artifact into `dir`, creating it if needed. On failure the
/// files written so far (and the directory, if created here) are removed.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> io::Result<Vec<PathBuf>> {
    let created = !dir.exists();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for a in artifacts {
        let path = dir.join(&a.name);
        if let Err(e) = fs::write(&path, &a.content) {
            remove_partial(&written, &path, created.then_some(dir));
            return Err(e);
        }
        written.push(path);
    }
    Ok(written)
}

fn remove_partial(written: &[PathBuf], failed: &Path, dir: Option<&Path>) {
    for p in written.iter().map(PathBuf::as_path).chain(std::iter::once(failed)) {
        let _ = fs::remove_file(p);
    }
    if let Some(d) = dir {
        let _ = fs::remove_dir(d);
    }
}
