//! Run manifests tie a training run's artifacts together.
//!
//! The manifest id hashes only what determines the run's results (resolved
//! config, seed, paradigm, subject and the input container's digest), so
//! repeating a run reproduces the id. Paths and timestamps are recorded but
//! not hashed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use sinc_eegnet::config::RunConfig;

pub struct Manifest {
    config_path: PathBuf,
    config: RunConfig,
    data_path: PathBuf,
    data_sha256: String,
    output_dir: PathBuf,
    started: u64,
    finished: Option<u64>,
    checkpoint_sha256: Option<String>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Manifest {
    pub fn start(config_path: &Path, config: &RunConfig, data_path: &Path, data_sha256: &str, output_dir: &Path) -> Self {
        Self {
            config_path: config_path.to_path_buf(),
            config: config.clone(),
            data_path: data_path.to_path_buf(),
            data_sha256: data_sha256.to_string(),
            output_dir: output_dir.to_path_buf(),
            started: unix_now(),
            finished: None,
            checkpoint_sha256: None,
        }
    }

    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"sinc-eegnet run v1\n");
        h.update(self.config.canonical_text().as_bytes());
        h.update(format!("data_sha256 = {}\n", self.data_sha256).as_bytes());
        hex::encode(h.finalize())
    }

    pub fn finish(&mut self, checkpoint_sha256: &str) {
        self.finished = Some(unix_now());
        self.checkpoint_sha256 = Some(checkpoint_sha256.to_string());
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        writeln!(s, "manifest {}", self.id()).unwrap();
        writeln!(s, "config_path {}", self.config_path.display()).unwrap();
        writeln!(s, "config_hash {}", c.hash()).unwrap();
        writeln!(s, "data_path {}", self.data_path.display()).unwrap();
        writeln!(s, "data_sha256 {}", self.data_sha256).unwrap();
        writeln!(s, "output_dir {}", self.output_dir.display()).unwrap();
        writeln!(s, "seed {}", c.train.seed).unwrap();
        writeln!(s, "paradigm {}", c.paradigm).unwrap();
        writeln!(s, "subject {}", c.subject.map_or("none".into(), |v| v.to_string())).unwrap();
        writeln!(s, "started_unix {}", self.started).unwrap();
        if let Some(f) = self.finished {
            writeln!(s, "finished_unix {f}").unwrap();
        }
        if let Some(h) = &self.checkpoint_sha256 {
            writeln!(s, "checkpoint_sha256 {h}").unwrap();
        }
        writeln!(s, "resolved_config").unwrap();
        for line in c.canonical_text().lines() {
            writeln!(s, "  {line}").unwrap();
        }
        s
    }
}

/// The id of the manifest next to `checkpoint`, if that manifest lists the checkpoint's digest.
pub fn id_for_checkpoint(checkpoint: &Path, checkpoint_sha256: &str) -> Option<String> {
    let dir = checkpoint.parent()?;
    let text = fs::read_to_string(dir.join(super::MANIFEST_FILE)).ok()?;
    let field = |key: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
            .map(str::to_string)
    };
    (field("checkpoint_sha256")?.as_str() == checkpoint_sha256)
        .then(|| field("manifest"))
        .flatten()
}
