//! Artifact files, the manifest and the timing log.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};
use twoscale::fmt17;

use crate::config::{hex, RunConfig};
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";

/// Pretty JSON formatter printing every float with 17 significant digits.
struct Sig17(PrettyFormatter<'static>);

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        w.write_all(fmt17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty-printed JSON with 17-digit floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("artifact serializes");
    out.push(b'\n');
    out
}

pub fn opt17(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEntry {
    pub config_hash: String,
    pub arguments: Vec<String>,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    /// Wall-clock timings live in this file, which is not hashed.
    pub timings: String,
    pub runs: BTreeMap<String, RunEntry>,
}

impl Manifest {
    fn empty() -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: twoscale::VERSION.into(),
            timings: TIMINGS.into(),
            runs: BTreeMap::new(),
        }
    }

    pub fn read(dir: &Path) -> CliResult<Option<Self>> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Config(format!("{}: unreadable manifest: {e}", path.display())))
    }

    /// Artifacts that are missing or whose hash changed.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        let mut bad = Vec::new();
        for run in self.runs.values() {
            for a in &run.artifacts {
                match std::fs::read(dir.join(&a.path)) {
                    Ok(bytes) if hex(&Sha256::digest(&bytes)) == a.sha256 => {}
                    Ok(_) => bad.push(format!("{}: hash mismatch", a.path)),
                    Err(_) => bad.push(format!("{}: missing", a.path)),
                }
            }
        }
        bad
    }
}

/// Collects the files one subcommand writes, then records them.
pub struct Artifacts {
    dir: PathBuf,
    command: String,
    arguments: Vec<String>,
    written: Vec<ArtifactEntry>,
    start: Instant,
    stages: Vec<(String, f64)>,
    stage_start: Instant,
}

impl Artifacts {
    pub fn new(dir: &Path, command: &str, arguments: Vec<String>) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
        Ok(Artifacts {
            dir: dir.into(),
            command: command.into(),
            arguments,
            written: Vec::new(),
            start: Instant::now(),
            stages: Vec::new(),
            stage_start: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Files written so far in this run.
    pub fn written(&self) -> &[ArtifactEntry] {
        &self.written
    }

    /// Closes the running stage timer under `name`.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.stages.push((name.into(), (now - self.stage_start).as_secs_f64()));
        self.stage_start = now;
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.into(), source })?;
        }
        std::fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.written.retain(|a| a.path != name);
        self.written.push(ArtifactEntry {
            path: name.into(),
            sha256: hex(&Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.write(name, &to_json(value))
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Numerical(format!("csv encoding of {name}: {e}"));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Numerical(format!("csv encoding of {name}: {e}")))?;
        self.write(name, &bytes)
    }

    /// Merges this run into the manifest and the timing log.
    pub fn finish(mut self, config: &RunConfig) -> CliResult<Manifest> {
        self.written.sort_by(|a, b| a.path.cmp(&b.path));
        let mut manifest = Manifest::read(&self.dir)?.unwrap_or_else(Manifest::empty);
        manifest.version = env!("CARGO_PKG_VERSION").into();
        manifest.core_version = twoscale::VERSION.into();
        manifest.runs.insert(
            self.command.clone(),
            RunEntry { config_hash: config.hash(), arguments: self.arguments.clone(), artifacts: self.written.clone() },
        );
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, to_json(&manifest)).map_err(|source| CliError::Io { path, source })?;

        let tpath = self.dir.join(TIMINGS);
        let mut timings: BTreeMap<String, serde_json::Value> = std::fs::read_to_string(&tpath)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        let stages: BTreeMap<String, f64> = self.stages.iter().cloned().collect();
        timings.insert(
            self.command.clone(),
            serde_json::json!({ "total_s": self.start.elapsed().as_secs_f64(), "stages": stages }),
        );
        std::fs::write(&tpath, to_json(&timings)).map_err(|source| CliError::Io { path: tpath, source })?;
        Ok(manifest)
    }
}
