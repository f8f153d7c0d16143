use std::path::{Path, PathBuf};

use weedmap::io::IoError;

/// Files written by one command, removed again if the command fails.
pub struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, IoError> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir).map_err(|e| IoError::file(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
            done: false,
        })
    }

    /// Path of `name` inside the output directory, recorded for cleanup.
    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn finish(mut self) {
        self.done = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        if self.created_dir {
            let _ = std::fs::remove_dir_all(&self.dir);
            return;
        }
        for p in &self.written {
            if p.is_dir() {
                let _ = std::fs::remove_dir_all(p);
            } else {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}
