//! Deterministic output files and the run manifest written next to them.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Arguments that only affect scheduling, never results.
fn strip_scheduling(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--threads" {
            skip = true;
            continue;
        }
        if a.starts_with("--threads=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}

#[derive(Debug, Serialize)]
struct OutputRecord {
    path: String,
    sha256: String,
}

/// Tracks one invocation: its identity hash and every file it writes.
pub struct Run {
    command: String,
    argv: Vec<String>,
    config_hash: Option<String>,
    seed: Option<u64>,
    id: String,
    start: Instant,
    outputs: Vec<OutputRecord>,
}

impl Run {
    pub fn new(
        command: &str,
        argv: &[String],
        config_bytes: Option<&[u8]>,
        seed: Option<u64>,
    ) -> Self {
        let config_hash = config_bytes.map(sha256_hex);
        let identity = json!({
            "args": strip_scheduling(argv),
            "command": command,
            "config": config_hash,
            "seed": seed,
            "version": env!("CARGO_PKG_VERSION"),
        });
        let id = sha256_hex(identity.to_string().as_bytes())[..16].to_string();
        Self {
            command: command.to_string(),
            argv: argv.to_vec(),
            config_hash,
            seed,
            id,
            start: Instant::now(),
            outputs: Vec::new(),
        }
    }

    #[cfg(test)]
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Pretty JSON with sorted keys and a `manifest` field naming this run.
    pub fn json_text<T: Serialize>(&self, value: &T) -> Result<String, CliError> {
        let mut v = serde_json::to_value(value).map_err(latticediff::Error::from)?;
        if let Value::Object(map) = &mut v {
            map.insert("manifest".into(), Value::String(self.id.clone()));
        }
        let mut text = serde_json::to_string_pretty(&v).map_err(latticediff::Error::from)?;
        text.push('\n');
        Ok(text)
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<(), CliError> {
        let text = self.json_text(value)?;
        self.write(path, text.as_bytes())
    }

    /// CSV with a `# manifest <id>` comment line, then a header row.
    pub fn write_csv(
        &mut self,
        path: &Path,
        header: &[String],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let mut text = format!("# manifest {}\n{}\n", self.id, header.join(","));
        for r in rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        self.write(path, text.as_bytes())
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(latticediff::Error::from)?;
        }
        let mut f = fs::File::create(path).map_err(latticediff::Error::from)?;
        f.write_all(bytes).map_err(latticediff::Error::from)?;
        self.outputs.push(OutputRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Writes `<primary stem>.manifest.json` next to the primary output.
    pub fn finish(self, primary: &Path) -> Result<PathBuf, CliError> {
        let stem = primary
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let path = primary.with_file_name(format!("{stem}.manifest.json"));
        let manifest = json!({
            "argv": self.argv,
            "command": self.command,
            "config_sha256": self.config_hash,
            "id": self.id,
            "outputs": self.outputs,
            "seed": self.seed,
            "threads": rayon::current_num_threads(),
            "versions": { "latticediff": env!("CARGO_PKG_VERSION") },
            "wall_time_seconds": self.start.elapsed().as_secs_f64(),
        });
        let mut text = serde_json::to_string_pretty(&manifest).map_err(latticediff::Error::from)?;
        text.push('\n');
        fs::write(&path, text).map_err(latticediff::Error::from)?;
        Ok(path)
    }
}

/// Locale-free float formatting that round-trips.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
