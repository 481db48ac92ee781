use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{write_text, PipelineError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Inputs: the path as given. Outputs: the file name inside the run directory.
    pub path: String,
    pub sha256: String,
}

/// Record of one subcommand run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: Option<String>,
    pub parameters: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: Option<u64>) -> Self {
        Self {
            subcommand: subcommand.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config: None,
            parameters: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.into(), value.to_string());
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path).map_err(PipelineError::io(path))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn config_file(&mut self, path: &Path) -> Result<()> {
        self.config = Some(path.display().to_string());
        self.input(path)
    }

    /// Hashes `outputs` (names inside `dir`) and writes `dir/manifest.json`.
    pub fn finish(mut self, dir: &Path, outputs: &[String]) -> Result<Self> {
        for name in outputs {
            let p = dir.join(name);
            let sha256 = sha256_file(&p).map_err(PipelineError::io(&p))?;
            self.outputs.push(FileDigest {
                path: name.clone(),
                sha256,
            });
        }
        let mut text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        text.push('\n');
        write_text(dir, MANIFEST_FILE, &text)?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&p).map_err(PipelineError::io(&p))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))
    }

    pub fn output(&self, name: &str) -> Option<&FileDigest> {
        self.outputs.iter().find(|d| d.path == name)
    }
}

/// Checks `path` against the manifest of the run that produced it, if any.
///
/// Returns `Ok(false)` when no neighboring manifest lists the file. A hash
/// mismatch is a validation error unless `force` is set, in which case it
/// is reported on stderr.
pub fn verify_input(path: &Path, force: bool) -> Result<bool> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    if !dir.join(MANIFEST_FILE).exists() {
        return Ok(false);
    }
    let manifest = RunManifest::load(dir)?;
    let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
        return Ok(false);
    };
    let Some(expected) = manifest.output(name) else {
        return Ok(false);
    };
    let actual = sha256_file(path).map_err(PipelineError::io(path))?;
    if actual != expected.sha256 {
        let msg = format!(
            "{} does not match its {} manifest (expected sha256 {}, found {})",
            path.display(),
            manifest.subcommand,
            expected.sha256,
            actual
        );
        if force {
            eprintln!("warning: {msg}; continuing because of --force");
        } else {
            return Err(PipelineError::Validation(msg));
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tampered_output_fails_verification() {
        let dir = tempfile::tempdir().unwrap();
        write_text(dir.path(), "a.csv", "x\n1\n").unwrap();
        RunManifest::new("test", Some(1))
            .finish(dir.path(), &["a.csv".into()])
            .unwrap();
        let a = dir.path().join("a.csv");
        assert!(verify_input(&a, false).unwrap());
        write_text(dir.path(), "a.csv", "x\n2\n").unwrap();
        let err = verify_input(&a, false).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(verify_input(&a, true).unwrap());
        write_text(dir.path(), "b.csv", "x\n").unwrap();
        assert!(!verify_input(&dir.path().join("b.csv"), false).unwrap());
    }

    #[test]
    fn sha256_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        write_text(dir.path(), "abc", "abc").unwrap();
        assert_eq!(
            sha256_file(&dir.path().join("abc")).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
