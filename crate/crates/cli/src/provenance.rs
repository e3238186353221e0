//! JSON sidecars written next to every output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use hepacut_core::{Dims, Spacing};

pub fn unix_time() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Sidecar path for an output: same stem, `.json` extension.
pub fn sidecar_path(output: &Path) -> PathBuf {
    output.with_extension("json")
}

/// Data file named by a MetaImage header, if it is separate from the header.
fn meta_data_file(header: &Path) -> Option<PathBuf> {
    let text = fs::read(header).ok()?;
    // the header is ASCII and ends before any LOCAL payload
    let text = String::from_utf8_lossy(&text[..text.len().min(4096)]).into_owned();
    let line = text.lines().find(|l| l.trim_start().starts_with("ElementDataFile"))?;
    let name = line.split_once('=')?.1.trim();
    (name != "LOCAL").then(|| header.parent().unwrap_or(Path::new("")).join(name))
}

/// SHA-256 of a file, covering the separate raw data file of a MetaImage
/// header as well.
pub fn checksum(path: &Path) -> CliResult<String> {
    let mut h = Sha256::new();
    let read = |p: &Path| fs::read(p).map_err(|e| CliError::data(format!("cannot read {}: {e}", p.display())));
    h.update(read(path)?);
    if let Some(raw) = meta_data_file(path) {
        h.update(read(&raw)?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Builder for one command's sidecar.
pub struct Provenance {
    command: &'static str,
    started: f64,
    config: Value,
    inputs: Vec<Value>,
    extra: Map<String, Value>,
}

impl Provenance {
    pub fn start(command: &'static str, cfg: &PipelineConfig) -> Self {
        let config: Map<String, Value> = cfg
            .raw
            .entries()
            .map(|(k, v, s)| (k.to_string(), json!({ "value": v, "source": s.as_str() })))
            .collect();
        Provenance {
            command,
            started: unix_time(),
            config: Value::Object(config),
            inputs: Vec::new(),
            extra: Map::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path, dims: Option<Dims>) -> CliResult<()> {
        self.inputs.push(json!({
            "role": role,
            "path": path.display().to_string(),
            "sha256": checksum(path)?,
            "dims": dims,
        }));
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: Value) {
        self.extra.insert(key.to_string(), value);
    }

    /// Write the sidecar for `output`.
    pub fn write(&self, output: &Path, dims: Option<Dims>, spacing: Option<Spacing>) -> CliResult<()> {
        let doc = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "started_unix": self.started,
            "finished_unix": unix_time(),
            "output": {
                "path": output.display().to_string(),
                "dims": dims,
                "spacing": spacing,
            },
            "inputs": self.inputs,
            "config": self.config,
            "details": self.extra,
        });
        let path = sidecar_path(output);
        let text = serde_json::to_string_pretty(&doc).expect("json values serialise");
        fs::write(&path, text + "\n").map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
    }
}

/// Output dims recorded in the sidecar of `file`, if it has one.
pub fn recorded_dims(file: &Path) -> CliResult<Option<Dims>> {
    let path = sidecar_path(file);
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(None);
    };
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("malformed provenance {}: {e}", path.display())))?;
    let dims = &doc["output"]["dims"];
    if dims.is_null() {
        return Ok(None);
    }
    let v: Option<Vec<usize>> = dims
        .as_array()
        .and_then(|a| a.iter().map(|x| x.as_u64().map(|n| n as usize)).collect());
    match v.as_deref() {
        Some(&[x, y, z]) => Ok(Some([x, y, z])),
        _ => Err(CliError::data(format!("malformed dims in provenance {}", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_covers_raw_data_file() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = dir.path().join("a.mhd");
        fs::write(&hdr, "NDims = 3\nElementDataFile = a.raw\n").unwrap();
        fs::write(dir.path().join("a.raw"), [1u8, 2, 3]).unwrap();
        let c1 = checksum(&hdr).unwrap();
        fs::write(dir.path().join("a.raw"), [1u8, 2, 4]).unwrap();
        let c2 = checksum(&hdr).unwrap();
        assert_ne!(c1, c2);
        assert_eq!(c1.len(), 64);
    }

    #[test]
    fn empty_input_hash_is_the_known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.bin");
        fs::write(&p, []).unwrap();
        assert_eq!(
            checksum(&p).unwrap(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
