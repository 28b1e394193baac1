//! Output files. Every file carries the hash of the run manifest: CSV and
//! text files on a leading `# manifest_sha256=` line, JSON files in a
//! top-level `manifest_sha256` field, SVG files in a comment.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Command, RunConfig};
use crate::error::CliError;

pub const HASH_KEY: &str = "manifest_sha256";

/// The hashed part of the manifest: everything that determines the outputs.
pub fn manifest_core(command: Command, config: &RunConfig) -> Value {
    let versions: BTreeMap<&str, &str> =
        [("instablab", env!("CARGO_PKG_VERSION")), ("instablab-core", instablab::VERSION)].into_iter().collect();
    json!({
        "tool": "instablab",
        "versions": versions,
        "command": command.name(),
        "seed": config.seed,
        "config": config.echo(),
    })
}

pub fn hash_of(core: &Value) -> String {
    let digest = Sha256::digest(serde_json::to_vec(core).expect("manifest serializes"));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Artifacts {
    dir: PathBuf,
    core: Value,
    hash: String,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(command: Command, config: &RunConfig) -> Result<Self, CliError> {
        let dir = PathBuf::from(&config.output.dir);
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::new(crate::error::ErrorKind::Io, format!("cannot create {}: {e}", dir.display())))?;
        let core = manifest_core(command, config);
        let hash = hash_of(&core);
        Ok(Self { dir, core, hash, written: Vec::new() })
    }

    fn write(&mut self, name: &str, body: String) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::new(crate::error::ErrorKind::Io, format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// CSV or plain text behind a hash comment line.
    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let out = format!("# {HASH_KEY}={}\n{body}", self.hash);
        self.write(name, out)
    }

    /// A JSON object with the hash added as a top-level field.
    pub fn json(&mut self, name: &str, mut value: Value) -> Result<(), CliError> {
        let map = value.as_object_mut().expect("reports are JSON objects");
        map.insert(HASH_KEY.into(), Value::String(self.hash.clone()));
        let mut out = serde_json::to_string_pretty(&value).expect("report serializes");
        out.push('\n');
        self.write(name, out)
    }

    pub fn svg(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let (head, tail) = body.split_once('\n').expect("svg has a header line");
        let out = format!("{head}\n<!-- {HASH_KEY}={} -->\n{tail}", self.hash);
        self.write(name, out)
    }

    /// Writes `manifest.json`. The wall time is added after hashing so it
    /// never changes the hash.
    pub fn finish(mut self, wall_time: Option<f64>) -> Result<(PathBuf, String), CliError> {
        let mut manifest = self.core.clone();
        let map = manifest.as_object_mut().expect("manifest is an object");
        map.insert(HASH_KEY.into(), Value::String(self.hash.clone()));
        map.insert("outputs".into(), json!(self.written));
        if let Some(t) = wall_time {
            map.insert("wall_time_seconds".into(), json!(t));
        }
        let mut out = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        out.push('\n');
        self.write("manifest.json", out)?;
        Ok((self.dir, self.hash))
    }
}

fn is_hash(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Whether a file's content carries a well-formed manifest hash in the place
/// its format reserves for it.
pub fn carries_hash(path: &Path, content: &str) -> bool {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "json" => serde_json::from_str::<Value>(content)
            .ok()
            .and_then(|v| v.get(HASH_KEY).and_then(Value::as_str).map(is_hash))
            .unwrap_or(false),
        "svg" => content
            .split("<!-- ")
            .nth(1)
            .and_then(|s| s.strip_prefix(&format!("{HASH_KEY}=")))
            .is_some_and(|s| s.get(..64).is_some_and(is_hash)),
        _ => content
            .lines()
            .next()
            .and_then(|l| l.strip_prefix(&format!("# {HASH_KEY}=")))
            .is_some_and(is_hash),
    }
}

/// Files in `dir` lacking a manifest hash, sorted by name.
pub fn audit(dir: &Path) -> Result<(usize, Vec<String>), CliError> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut missing = Vec::new();
    for path in &names {
        let ok = fs::read_to_string(path).map(|c| carries_hash(path, &c)).unwrap_or(false);
        if !ok {
            missing.push(path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
        }
    }
    Ok((names.len(), missing))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_recognised_in_each_format() {
        let h = "ab".repeat(32);
        assert!(carries_hash(Path::new("a.csv"), &format!("# manifest_sha256={h}\nt,G\n")));
        assert!(carries_hash(Path::new("a.json"), &format!("{{\"manifest_sha256\": \"{h}\"}}")));
        assert!(carries_hash(Path::new("a.svg"), &format!("<svg>\n<!-- manifest_sha256={h} -->\n</svg>")));
        assert!(!carries_hash(Path::new("a.csv"), "t,G\n"));
        assert!(!carries_hash(Path::new("a.json"), "{\"manifest_sha256\": \"short\"}"));
    }

    #[test]
    fn hash_depends_on_config_only() {
        let mut config = RunConfig::default();
        let a = hash_of(&manifest_core(Command::Evolve, &config));
        assert_eq!(a, hash_of(&manifest_core(Command::Evolve, &config)));
        config.seed = 2;
        assert_ne!(a, hash_of(&manifest_core(Command::Evolve, &config)));
    }
}
