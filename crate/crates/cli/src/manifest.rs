//! JSON-lines run manifest: one header line written before any computation,
//! one result line appended per produced file, and a closing status line.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Serialize)]
struct Header<'a> {
    record: &'a str,
    timestamp_unix: u64,
    subcommand: &'a str,
    build: &'a str,
    config_path: String,
    config_sha256: String,
    master_seed: u64,
    threads: usize,
    preset: &'a str,
    grid_nx: usize,
    grid_nt: usize,
    grid_t_horizon: f64,
}

#[derive(Serialize)]
struct FileRecord<'a> {
    record: &'a str,
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Status<'a> {
    record: &'a str,
    status: &'a str,
    detail: String,
}

pub struct Manifest {
    path: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    /// Write the header line; the manifest exists before any result does.
    #[allow(clippy::too_many_arguments)]
    pub fn start(
        out_dir: &Path,
        subcommand: &str,
        config_path: &Path,
        config_text: &str,
        master_seed: u64,
        threads: usize,
        preset: &str,
        (nx, nt, t_horizon): (usize, usize, f64),
    ) -> Result<Manifest> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("cannot create {}", out_dir.display()))?;
        let path = out_dir.join("manifest.jsonl");
        let header = Header {
            record: "run",
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            subcommand,
            build: env!("GIT_DESCRIBE"),
            config_path: config_path.display().to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            master_seed,
            threads,
            preset,
            grid_nx: nx,
            grid_nt: nt,
            grid_t_horizon: t_horizon,
        };
        let mut file = File::create(&path)?;
        writeln!(file, "{}", serde_json::to_string(&header)?)?;
        Ok(Manifest { path })
    }

    fn append(&self, line: &str) -> Result<()> {
        let mut file = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(file, "{line}")?;
        Ok(())
    }

    /// Record a produced file with its content hash.
    pub fn record_file(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let rec = FileRecord {
            record: "file",
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        };
        self.append(&serde_json::to_string(&rec)?)
    }

    pub fn finish(&self, status: &str, detail: &str) -> Result<()> {
        let rec = Status {
            record: "status",
            status,
            detail: detail.to_string(),
        };
        self.append(&serde_json::to_string(&rec)?)
    }
}
