use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::args::Command;

/// Written next to every run; `qvar replay --manifest` re-executes `command`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub command: Command,
    pub seed: Option<u64>,
    pub version: String,
    pub threads: usize,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
    pub output: Option<PathBuf>,
}

impl RunManifest {
    pub fn default_path(out: &Path) -> PathBuf {
        let mut name = out.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }
}
