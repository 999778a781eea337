use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Record written next to the outputs of every run.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// `sha256("blob <len>\0" + bytes)` per input file, as git hashes blobs.
    pub inputs: Vec<InputHash>,
    pub started_unix_secs: u64,
    pub wall_secs: f64,
    pub outputs: Vec<String>,
    pub errors: Vec<String>,
    #[serde(skip)]
    start: Option<Instant>,
}

#[derive(Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>) -> Self {
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            command: command.to_string(),
            config,
            seeds,
            inputs: Vec::new(),
            started_unix_secs: started,
            wall_secs: 0.0,
            outputs: Vec::new(),
            errors: Vec::new(),
            start: Some(Instant::now()),
        }
    }

    pub fn add_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputHash { path: path.display().to_string(), sha256: content_hash(bytes) });
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `<primary>.manifest.json` and returns its path.
    pub fn write_next_to(mut self, primary: &Path) -> std::io::Result<PathBuf> {
        self.wall_secs = self.start.map_or(0.0, |s| s.elapsed().as_secs_f64());
        let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        let path = primary.with_file_name(name);
        std::fs::write(&path, serde_json::to_string_pretty(&self).expect("manifest serializes"))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_git_blob_scheme() {
        // sha256 of the bytes `blob 6\0hello\n`
        assert_eq!(
            content_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }
}
