//! Report files and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

/// Collects the files a command writes, then records them in `manifest.txt`.
pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(PathBuf::from(name));
        Ok(())
    }

    /// Note a file produced by someone else (e.g. a dataset writer).
    pub fn record(&mut self, name: &str) {
        self.written.push(PathBuf::from(name));
    }

    pub fn finish(self, command: &str, effective_config: &str, elapsed: Duration) -> Result<PathBuf> {
        let mut text = String::new();
        let _ = writeln!(text, "run_id = {}", run_id(command, effective_config));
        let _ = writeln!(text, "command = {command}");
        let _ = writeln!(text, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(text, "duration_seconds = {:.3}", elapsed.as_secs_f64());
        text.push_str("\n[config]\n");
        text.push_str(effective_config);
        text.push_str("\n[outputs]\n");
        for p in &self.written {
            let _ = writeln!(text, "{}", p.display());
        }
        let path = self.root.join("manifest.txt");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// 12 hex digits of SHA-256 over the command and its effective configuration,
/// so identical runs share an id.
pub fn run_id(command: &str, effective_config: &str) -> String {
    let digest = Sha256::new().chain_update(command).chain_update([0u8]).chain_update(effective_config).finalize();
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}
