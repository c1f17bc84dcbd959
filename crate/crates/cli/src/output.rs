use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Tracks files written by a command and deletes them unless the command
/// finishes and calls [`Outputs::commit`].
#[derive(Default)]
pub struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `path` and runs `write` on it.
    pub fn write_with<F>(&mut self, path: &Path, write: F) -> Result<()>
    where
        F: FnOnce(&Path) -> cmaff::Result<()>,
    {
        self.written.push(path.to_path_buf());
        write(path).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_bytes(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        self.written.push(path.to_path_buf());
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    pub fn track(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.written.extend(paths);
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            if p.is_file() {
                log::warn!("removing partial output {}", p.display());
                let _ = fs::remove_file(p);
            }
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
