//! Filesystem helpers: every output file is written to a sibling temporary
//! path and renamed into place, so readers never observe a partial file.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CanmError, Result};

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CanmError::io(format!("creating {}", parent.display()), e))?;
    }
    let tmp = temp_sibling(path);
    fs::write(&tmp, bytes).map_err(|e| CanmError::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CanmError::io(format!("renaming into {}", path.display()), e)
    })
}

/// A set of files destined for one directory, committed together.
///
/// Nothing touches the filesystem until [`OutputSet::commit`]; each file is
/// then written atomically.
#[derive(Default)]
pub struct OutputSet {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, rel: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((rel.into(), bytes));
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn commit(self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)
            .map_err(|e| CanmError::io(format!("creating {}", dir.display()), e))?;
        for (rel, bytes) in self.files {
            write_atomic(&dir.join(rel), &bytes)?;
        }
        Ok(())
    }
}
