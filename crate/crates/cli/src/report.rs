//! Machine-readable JSON reports and atomic output writing.

use std::path::Path;

use serde::Serialize;

use tacforce_core::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// Envelope every report shares: schema version, command, seed, hash of the
/// resolved configuration, then the command payload.
#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub seed: u64,
    pub config_hash: &'a str,
    #[serde(flatten)]
    pub payload: T,
}

impl<'a, T: Serialize> Report<'a, T> {
    pub fn new(command: &'a str, seed: u64, config_hash: &'a str, payload: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            seed,
            config_hash,
            payload,
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        atomic_write(path, &bytes)
    }
}

/// Write through a temp file in the same directory, then rename, so readers
/// never observe partial output.
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = match dir {
        Some(d) => d.join(format!(".{file_name}.tmp")),
        None => std::path::PathBuf::from(format!(".{file_name}.tmp")),
    };
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Existence check that maps to a validation error (exit 2), used for all
/// user-supplied input paths.
pub fn require_input(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(tacforce_core::Error::config(format!(
            "{what} {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_creates_parents_and_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/out.json");
        atomic_write(&path, b"{}").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"{}");
        // no temp file left behind
        let entries: Vec<_> = std::fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }
}
