use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// What a stage read, how it was configured, and what it wrote.
#[derive(Debug, Default)]
pub struct Record {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Record {
    pub fn new(command: &str, config: Vec<(String, String)>) -> Self {
        Self {
            command: command.to_string(),
            config,
            ..Default::default()
        }
    }

    /// Record an input, plus its frame-schedule sidecar when there is one.
    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
        let sched = dpet_core::nifti::schedule_path(path);
        if sched.exists() {
            self.inputs.push(sched);
        }
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Files are listed by name so that identical runs in different
    /// directories give identical records.
    pub fn render(&self) -> Result<String, CliError> {
        let mut s = format!("tool dpet {}\ncommand {}\n", env!("CARGO_PKG_VERSION"), self.command);
        for (k, v) in &self.config {
            let _ = writeln!(s, "config {k}={v}");
        }
        for (kind, list) in [("input", &self.inputs), ("output", &self.outputs)] {
            for p in list {
                let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
                let _ = writeln!(s, "{kind} {name} sha256={}", sha256_file(p)?);
            }
        }
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.render()?).map_err(|e| CliError::io(path, e))
    }
}

/// Sidecar next to a file output: `<file>.prov.txt`.
pub fn sidecar_for(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".prov.txt");
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_lists_hashes_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        std::fs::write(&a, b"abc").unwrap();
        let mut r = Record::new("test", vec![("test.x".into(), "1".into())]);
        r.input(&a);
        let text = r.render().unwrap();
        assert!(text.contains("config test.x=1\n"));
        assert!(text.contains("input a.txt sha256=ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad\n"));
        assert_eq!(sidecar_for(Path::new("d/k.nii")), PathBuf::from("d/k.nii.prov.txt"));
    }
}
