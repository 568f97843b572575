use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Output files of one command, buffered and written together at the end.
pub struct Output {
    dir: PathBuf,
    force: bool,
    files: Vec<(String, Vec<u8>)>,
}

impl Output {
    /// Fails early if any of `names` already exists and `force` is off.
    pub fn new(dir: &Path, force: bool, names: &[&str]) -> Result<Self> {
        if !force {
            for name in names {
                let path = dir.join(name);
                if path.exists() {
                    bail!("{} already exists (use --force to overwrite)", path.display());
                }
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            force,
            files: Vec::new(),
        })
    }

    pub fn add(&mut self, name: impl Into<String>, contents: Vec<u8>) {
        self.files.push((name.into(), contents));
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, contents) in self.files {
            let path = self.dir.join(name);
            if path.exists() && !self.force {
                bail!("{} already exists (use --force to overwrite)", path.display());
            }
            fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}
