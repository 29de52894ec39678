use std::fs;
use std::path::{Path, PathBuf};

use crate::Failure;

/// Artifacts held in memory until the whole run has succeeded.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_with(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut Vec<u8>) -> deselboost::Result<()>,
    ) -> Result<(), Failure> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    /// Writes every file to `.partial` names, then renames them all. On
    /// failure nothing under the final names is left behind.
    pub fn commit(self, dir: &Path) -> Result<(), Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
        let staged: Vec<(PathBuf, PathBuf)> =
            self.files.iter().map(|(name, _)| (dir.join(format!("{name}.partial")), dir.join(name))).collect();
        let cleanup = |staged: &[(PathBuf, PathBuf)]| {
            for (tmp, _) in staged {
                let _ = fs::remove_file(tmp);
            }
        };
        for ((tmp, _), (_, bytes)) in staged.iter().zip(&self.files) {
            if let Err(e) = fs::write(tmp, bytes) {
                cleanup(&staged);
                return Err(Failure::Data(format!("cannot write {}: {e}", tmp.display())));
            }
        }
        for (tmp, path) in &staged {
            fs::rename(tmp, path).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}
