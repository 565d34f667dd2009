//! Output files are written to a temporary sibling and renamed into place
//! only after the whole command succeeded. A `<path>.lock` file marks an
//! output as in use so two processes never write the same path.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(target: &Path) -> Result<Self, CliError> {
        let mut name = target.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".lock");
        let path = target.with_file_name(name);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        }
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::io(
                format!("{} is locked by another run (remove {} if it is stale)", target.display(), path.display()),
                e,
            )),
            Err(e) => Err(CliError::io(format!("creating {}", path.display()), e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Files staged in temporaries until [`Staged::commit`].
#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stage `target` with contents produced by `fill`.
    pub fn write<F>(&mut self, target: &Path, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let dir = match target.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| CliError::io(format!("staging {}", target.display()), e))?;
        {
            let mut w = BufWriter::new(tmp.as_file_mut());
            fill(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(format!("writing {}", target.display()), e))?;
        }
        self.files.push((tmp, target.to_path_buf()));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, target: &Path, value: &T) -> Result<(), CliError> {
        self.write(target, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")
        })
    }

    pub fn write_jsonl<T: Serialize>(&mut self, target: &Path, items: &[T]) -> Result<(), CliError> {
        self.write(target, |w| {
            for item in items {
                serde_json::to_writer(&mut *w, item)?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })
    }

    /// Rename every staged file into place.
    pub fn commit(self) -> Result<(), CliError> {
        for (tmp, target) in self.files {
            tmp.persist(&target).map_err(|e| CliError::io(format!("renaming into {}", target.display()), e.error))?;
        }
        Ok(())
    }
}

pub fn open_input(path: &Path) -> Result<std::io::BufReader<File>, CliError> {
    File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| CliError::io(format!("opening {}", path.display()), e))
}
