//! Output directory handling: advisory lock, input digests and `manifest.json`.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lls.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
}

/// All runs recorded in one output directory, one entry per (command, outputs).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub runs: Vec<RunManifest>,
}

impl ManifestFile {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn upsert(&mut self, run: RunManifest) {
        self.runs
            .retain(|r| !(r.command == run.command && r.outputs == run.outputs));
        self.runs.push(run);
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).with_context(|| format!("reading {}", path.display()))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// One subcommand invocation against an output directory.
pub struct Run {
    dir: PathBuf,
    command: String,
    seed: u64,
    started_at: String,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    lock: PathBuf,
    pub quiet: bool,
}

impl Run {
    pub fn start(dir: &Path, command: &str, seed: u64, quiet: bool) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let lock = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => bail!(
                "output directory {} is locked by another run (remove {} if stale)",
                dir.display(),
                lock.display()
            ),
            Err(e) => return Err(e).with_context(|| format!("creating {}", lock.display())),
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_owned(),
            seed,
            started_at: now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            lock,
            quiet,
        })
    }

    /// Relative paths land inside the output directory.
    pub fn output(&mut self, path: &Path) -> PathBuf {
        let full = if path.is_absolute() { path.to_path_buf() } else { self.dir.join(path) };
        self.outputs.push(full.display().to_string());
        full
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn note(&self, message: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", message.as_ref());
        }
    }

    pub fn finish(self, config: serde_json::Value) -> Result<()> {
        let mut file = ManifestFile::load(&self.dir)?;
        file.upsert(RunManifest {
            command: self.command.clone(),
            config,
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: self.seed,
            started_at: self.started_at.clone(),
            finished_at: now(),
        });
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&file)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

impl Drop for Run {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
