use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ConfigEcho, RunConfig};
use crate::CliError;

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const PARTIAL_MARKER: &str = ".partial";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    /// Relative to the directory that holds the file set.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ConfigEcho<'a>,
    pub inputs: Vec<FileEntry>,
    pub stages: Vec<&'static str>,
    pub outputs: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> Result<(u64, String), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        write!(hex, "{b:02x}").expect("writing to a string");
    }
    Ok((bytes.len() as u64, hex))
}

/// Hash entries for `names` under `dir`, sorted by name.
pub fn hash_files(dir: &Path, names: &[String]) -> Result<Vec<FileEntry>, CliError> {
    let mut names = names.to_vec();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .map(|name| {
            let (bytes, sha256) = sha256_file(&dir.join(&name))?;
            Ok(FileEntry {
                path: name,
                bytes,
                sha256,
            })
        })
        .collect()
}

fn input_entries(cfg: &RunConfig) -> Result<Vec<FileEntry>, CliError> {
    let i = &cfg.inputs;
    [
        ("quotes_spx", &i.quotes_spx),
        ("quotes_rut", &i.quotes_rut),
        ("ois", &i.ois),
        ("dgs", &i.dgs),
        ("vix", &i.vix),
        ("rvx", &i.rvx),
        ("nfci", &i.nfci),
    ]
    .into_iter()
    .filter_map(|(label, p)| p.as_ref().map(|p| (label, p)))
    .filter(|(_, p)| p.is_file())
    .map(|(label, p)| {
        let (bytes, sha256) = sha256_file(p)?;
        Ok(FileEntry {
            path: label.to_string(),
            bytes,
            sha256,
        })
    })
    .collect()
}

/// Writes `run_manifest.json` into the output directory.
pub fn write_manifest(
    cfg: &RunConfig,
    stages: Vec<&'static str>,
    outputs: &[String],
) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.echo(),
        inputs: input_entries(cfg)?,
        stages,
        outputs: hash_files(&cfg.out_dir, outputs)?,
    };
    let path = cfg.out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::Io { path, source: e })
}
