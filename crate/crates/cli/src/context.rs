//! Per-run state: layered settings, input digests, outputs and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use artembed::store::{companion_path, decode, EmbeddingSet, Header, LabelSpace, LabelSpaces};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Values from `--config`, keyed by long flag name.
///
/// Keys may use dashes or underscores (`batch-size` or `batch_size`).
#[derive(Debug, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("bad config file: {e}")))?;
        Ok(ConfigFile { table })
    }

    fn lookup(&self, key: &str) -> Option<&toml::Value> {
        self.table.get(key).or_else(|| self.table.get(&key.replace('-', "_")))
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: Map<String, Value>,
    /// SHA-256 of the exact bytes of every file read.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub duration_secs: f64,
}

pub struct Context {
    command: String,
    out_dir: PathBuf,
    seed: u64,
    config_file: ConfigFile,
    config: Map<String, Value>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    warnings: Vec<String>,
    started: Instant,
}

impl Context {
    /// Resolves the global `--seed` (default 42) and `--out` (default `.`)
    /// against the config file.
    pub fn new(command: &str, config_file: ConfigFile, seed: Option<u64>, out: Option<PathBuf>) -> CliResult<Self> {
        let mut ctx = Context {
            command: command.to_owned(),
            out_dir: PathBuf::new(),
            seed: 0,
            config_file,
            config: Map::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            started: Instant::now(),
        };
        ctx.seed = ctx.get("seed", seed, 42)?;
        ctx.out_dir = ctx.get("out", out, PathBuf::from("."))?;
        Ok(ctx)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Flag value, else config value, else nothing. The result is recorded.
    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr + Serialize + Clone,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.config_file.lookup(key) {
                None => None,
                Some(v) => Some(parse_setting(key, &flatten(v))?),
            },
        };
        if let Some(v) = &value {
            self.config.insert(key.to_owned(), serde_json::to_value(v.clone())?);
        }
        Ok(value)
    }

    /// Like [`Context::opt`] with a default.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T: FromStr + Serialize + Clone,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.config
                    .insert(key.to_owned(), serde_json::to_value(default.clone())?);
                Ok(default)
            }
        }
    }

    /// A setting that must come from a flag or the config file.
    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<T>
    where
        T: FromStr + Serialize + Clone,
    {
        self.opt(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required --{key}")))
    }

    pub fn warn(&mut self, message: String) {
        eprintln!("warning: {message}");
        self.warnings.push(message);
    }

    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(bytes)
    }

    pub fn read_store(&mut self, path: &Path) -> CliResult<(EmbeddingSet, Option<Header>)> {
        let bytes = self.read(path)?;
        decode(&bytes).map_err(|e| CliError::in_file(path, e))
    }

    /// The companion label-space file of a store, if present.
    pub fn read_labelspaces(&mut self, store: &Path) -> CliResult<Option<LabelSpaces>> {
        let path = companion_path(store);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = self.read(&path)?;
        let spaces = serde_json::from_slice(&bytes).map_err(|e| CliError::in_file(&path, e.into()))?;
        Ok(Some(spaces))
    }

    /// The companion's class list for `task`, or one derived from the labels.
    pub fn labelspace_for(&mut self, store: &Path, set: &EmbeddingSet, task: &str) -> CliResult<LabelSpace> {
        if let Some(spaces) = self.read_labelspaces(store)? {
            if spaces.0.contains_key(task) {
                return Ok(spaces.get(task)?);
            }
        }
        Ok(LabelSpace::derive(set, task)?)
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))?;
        let path = self.output_path(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(path.display().to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes `<command>.manifest.json` and returns its path.
    pub fn finish(mut self) -> CliResult<PathBuf> {
        let manifest = RunManifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: self.seed,
            config: std::mem::take(&mut self.config),
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
            warnings: std::mem::take(&mut self.warnings),
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let name = format!("{}.manifest.json", self.command);
        self.write_json(&name, &manifest)
    }
}

/// A config value in the textual form its flag accepts; arrays become
/// comma-separated lists.
fn flatten(value: &toml::Value) -> String {
    match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Array(items) => items.iter().map(flatten).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

fn parse_setting<T: FromStr>(key: &str, raw: &str) -> CliResult<T> {
    raw.parse()
        .map_err(|_| CliError::Usage(format!("invalid value {raw:?} for {key} in config file")))
}
