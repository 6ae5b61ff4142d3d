//! Run manifests written next to every command's outputs.
//!
//! A manifest is a key=value file. Parameters are stored under their own
//! names and bookkeeping under `run.*`, so a pipeline manifest can be fed
//! back to `mccdic pipeline` to repeat the run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::Result;
use crate::keyvalue::KeyValues;

pub const RUN_PREFIX: &str = "run.";

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub params: KeyValues,
    pub seeds: Vec<(String, u64)>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub argv: Vec<String>,
    started: Instant,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.to_string(),
            params: KeyValues::default(),
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            argv: std::env::args().collect(),
            started: Instant::now(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.params.insert(key, value);
        self
    }

    pub fn seed(&mut self, name: &str, seed: u64) -> &mut Self {
        self.seeds.push((name.to_string(), seed));
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = self.params.clone();
        let paths = |v: &[PathBuf]| {
            v.iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        kv.insert("run.command", &self.command);
        kv.insert("run.version", env!("CARGO_PKG_VERSION"));
        kv.insert("run.argv", self.argv.join(" "));
        kv.insert("run.inputs", paths(&self.inputs));
        kv.insert("run.outputs", paths(&self.outputs));
        for (name, seed) in &self.seeds {
            kv.insert(&format!("run.seed.{name}"), seed);
        }
        kv.insert(
            "run.wall_clock_s",
            format!("{:.3}", self.started.elapsed().as_secs_f64()),
        );
        kv
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_key_values().write(path)
    }
}

/// Manifest path for a command whose main output is `output`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.txt");
    output.with_file_name(name)
}
