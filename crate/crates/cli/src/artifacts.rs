//! Atomic artifact writes and run manifests.

use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Writes through a temporary file in the target directory, then renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Collects `key=value` lines for the manifest of one run.
pub struct Manifest {
    start: Instant,
    lines: Vec<(String, String)>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, input: &[u8]) -> Self {
        let mut m = Manifest { start: Instant::now(), lines: Vec::new(), outputs: Vec::new() };
        m.set("command", command);
        m.set("input_sha256", sha256_hex(input));
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn write(&mut self, path: &Path, contents: &str) -> std::io::Result<()> {
        write_atomic(path, contents)?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    pub fn finish(self, path: &Path) -> std::io::Result<()> {
        let mut text = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(text, "{k}={v}");
        }
        for (i, p) in self.outputs.iter().enumerate() {
            let _ = writeln!(text, "output.{i}={}", p.display());
        }
        let _ = writeln!(text, "wall_time_s={:.6}", self.start.elapsed().as_secs_f64());
        write_atomic(path, &text)
    }
}
