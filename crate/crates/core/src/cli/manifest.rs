//! Run manifests written beside every output file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::time::Micros;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub argv: Vec<String>,
    /// Named input files as given on the command line.
    pub inputs: BTreeMap<String, PathBuf>,
    pub seed: u64,
    pub start_us: Micros,
    pub end_us: Micros,
    pub outputs: Vec<PathBuf>,
    /// Wall-clock creation time; the only non-virtual time in a run.
    pub created_unix_s: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, argv: Vec<String>, seed: u64) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            argv,
            inputs: BTreeMap::new(),
            seed,
            start_us: 0,
            end_us: 0,
            outputs: Vec::new(),
            created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    pub fn input(&mut self, name: &str, path: Option<&Path>) {
        if let Some(p) = path {
            self.inputs.insert(name.to_string(), p.to_path_buf());
        }
    }
}

/// `out.jsonl` -> `out.jsonl.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
