//! Output directories, prerequisite lookup and run manifests.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut file = File::open(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

/// Path of a file produced by an earlier subcommand.
pub fn upstream(outdir: &Path, subcommand: &str, file: &str) -> CliResult<PathBuf> {
    let path = outdir.join(subcommand).join(file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Data(format!(
            "missing {}; run `playstate {subcommand}` first",
            path.display()
        )))
    }
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    version: &'a str,
    core_version: &'a str,
    created_unix_s: u64,
    config_sha256: String,
    config: &'a RunConfig,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

/// Output directory of one subcommand run.
pub struct Stage {
    name: &'static str,
    dir: PathBuf,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl Stage {
    /// Creates `<outdir>/<name>/`. An existing non-empty directory is
    /// replaced only when `force` is set.
    pub fn create(outdir: &Path, name: &'static str, force: bool) -> CliResult<Self> {
        let dir = outdir.join(name);
        if dir.exists() {
            let occupied = fs::read_dir(&dir)?.next().is_some();
            if occupied && !force {
                return Err(CliError::Config(format!(
                    "{} already holds outputs; pass --force to overwrite",
                    dir.display()
                )));
            }
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        Ok(Self {
            name,
            dir,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write<F>(&mut self, file: &str, body: F) -> CliResult<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> CliResult<()>,
    {
        let path = self.dir.join(file);
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        drop(w);
        self.outputs.push(FileDigest {
            path: file.to_string(),
            sha256: sha256_file(&path)?,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> CliResult<()> {
        self.write(file, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn write_text(&mut self, file: &str, text: &str) -> CliResult<()> {
        self.write(file, |w| Ok(w.write_all(text.as_bytes())?))
    }

    /// Writes `manifest.json` and returns the directory.
    pub fn finish(self, config: &RunConfig) -> CliResult<PathBuf> {
        let config_json = serde_json::to_vec(config)?;
        let manifest = Manifest {
            subcommand: self.name,
            version: env!("CARGO_PKG_VERSION"),
            core_version: playstate::VERSION,
            created_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            config_sha256: hex::encode(Sha256::digest(&config_json)),
            config,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let mut w = BufWriter::new(File::create(self.dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(self.dir)
    }
}
