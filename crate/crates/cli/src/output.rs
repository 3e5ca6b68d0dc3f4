//! Output directory with staged writes: files land as `name.partial` and
//! are renamed only when the whole command succeeds.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub const ERROR_FILE: &str = "error.json";
pub const CONFIG_ECHO: &str = "effective_config.json";

pub struct OutputDir {
    dir: PathBuf,
    staged: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        let stale = dir.join(ERROR_FILE);
        if stale.exists() {
            fs::remove_file(stale)?;
        }
        Ok(Self { dir: dir.to_path_buf(), staged: Vec::new() })
    }

    fn check_name(name: &str) -> Result<(), CliError> {
        if name.is_empty() || name.contains(['/', '\\']) || name == ".." {
            return Err(CliError::Config(format!("invalid output file name `{name}`")));
        }
        Ok(())
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        Self::check_name(name)?;
        fs::write(self.dir.join(format!("{name}.partial")), contents)?;
        if !self.staged.iter().any(|s| s == name) {
            self.staged.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(mtbo_core::Error::from)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::new();
        for name in &self.staged {
            let target = self.dir.join(name);
            fs::rename(self.dir.join(format!("{name}.partial")), &target)?;
            done.push(target);
        }
        Ok(done)
    }
}
