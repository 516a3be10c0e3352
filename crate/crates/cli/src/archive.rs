use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, RunConfig};

/// Contents of `run.json`: enough to reproduce an output directory.
#[derive(Debug, Serialize)]
pub struct RunInfo<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a RunConfig,
    /// Input name -> path and SHA-256 of its bytes.
    pub inputs: BTreeMap<String, InputDigest>,
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes `run.json` into `dir` with hashes of the given input files.
pub fn write_run_info(dir: &Path, command: &str, config: &RunConfig, inputs: &[(&str, &Path)]) -> Result<(), CliError> {
    let mut digests = BTreeMap::new();
    for (name, path) in inputs {
        digests.insert(
            name.to_string(),
            InputDigest {
                path: path.display().to_string(),
                sha256: sha256_file(path)?,
            },
        );
    }
    let info = RunInfo {
        tool: "boxforge",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        inputs: digests,
    };
    let path = dir.join("run.json");
    let text = serde_json::to_string_pretty(&info).expect("run info serializes");
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &serde_json::to_string_pretty(value).expect("report serializes"))
}
