//! Run configuration: TOML on disk, dotted-path overrides, validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::AgentConfig;
use crate::env::{generate_spec, EnvironmentSpec, GenerateParams};
use crate::metrics::{CheckpointSchedule, Comparator};
use crate::{Error, Result};

/// Environment variable naming the root for relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "HCB_OUTPUT_ROOT";

fn d_run_id() -> String {
    "run".into()
}
fn d_output_dir() -> PathBuf {
    PathBuf::from("hcb-out")
}
fn d_true() -> bool {
    true
}

/// Where the ground truth comes from: a spec file, an inline spec, or
/// generation parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<EnvironmentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateParams>,
    /// Generate a fresh spec for every run seed, with generation seed
    /// `generate.seed + seed` (wrapping).
    #[serde(default)]
    pub per_seed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_run_id")]
    pub run_id: String,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "d_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub checkpoint_schedule: CheckpointSchedule,
    #[serde(default)]
    pub comparator: Comparator,
    /// Write a per-round trace CSV.
    #[serde(default)]
    pub trace: bool,
    /// Track confidence coverage and the invariants that depend on it.
    #[serde(default = "d_true")]
    pub instrument: bool,
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub agent: AgentConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.into(),
            message: e.to_string(),
        })?;
        Self::from_value(value, origin)
    }

    pub fn from_value(value: toml::Value, origin: &str) -> Result<Self> {
        value.try_into().map_err(|e: toml::de::Error| Error::Parse {
            path: origin.into(),
            message: e.to_string(),
        })
    }

    /// Load from disk; a relative `spec_file` is taken relative to the
    /// config's directory.
    pub fn read_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        cfg.rebase(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        if let Some(p) = &self.environment.spec_file {
            if p.is_relative() {
                self.environment.spec_file = Some(base.join(p));
            }
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            path: "run config".into(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() || self.run_id.contains([',', '\n', '"']) {
            return Err(Error::config("run_id", "must be non-empty without commas, quotes or newlines"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must list at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds", "contains duplicates"));
        }
        self.checkpoint_schedule.resolve(self.horizon)?;
        self.agent.validate()?;
        let env = &self.environment;
        let sources =
            env.spec_file.is_some() as usize + env.spec.is_some() as usize + env.generate.is_some() as usize;
        if sources != 1 {
            return Err(Error::config(
                "environment",
                "give exactly one of `spec_file`, `spec` or `generate`",
            ));
        }
        if env.per_seed && env.generate.is_none() {
            return Err(Error::config("environment.per_seed", "needs `generate` parameters"));
        }
        if let Some(g) = &env.generate {
            g.validate()?;
        }
        if let Some(s) = &env.spec {
            s.validate()?;
        }
        Ok(())
    }

    /// The spec used by `seed`.
    pub fn spec_for_seed(&self, seed: u64) -> Result<EnvironmentSpec> {
        let env = &self.environment;
        if let Some(path) = &env.spec_file {
            return EnvironmentSpec::read_file(path);
        }
        if let Some(spec) = &env.spec {
            return Ok(spec.clone());
        }
        let mut params = env
            .generate
            .clone()
            .ok_or_else(|| Error::config("environment", "no environment source"))?;
        if env.per_seed {
            params.seed = params.seed.wrapping_add(seed);
        }
        generate_spec(&params)
    }
}

/// Resolve a relative output directory against `root` when given.
pub fn resolve_output_dir(dir: &Path, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if dir.is_relative() => r.join(dir),
        _ => dir.to_path_buf(),
    }
}

/// Set the dotted `path` inside a TOML table, creating tables on the way.
/// `raw` is read as a TOML value, or taken as a plain string if that fails.
pub fn set_dotted(root: &mut toml::Value, path: &str, raw: &str) -> Result<()> {
    let value = parse_value(raw);
    set_dotted_value(root, path, value)
}

pub fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn set_dotted_value(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(path, "empty key in dotted path"));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::config(path, format!("`{key}` is not inside a table")))?;
        node = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::config(path, "parent is not a table"))?;
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
        run_id = "basic"
        horizon = 50
        seeds = [1, 2]

        [environment.generate]
        dim = 2
        levels = 2
        actions_per_level = [2, 2]
        thresholds = [0.5, 0.5]
        noise_sigma = 0.1
        seed = 3

        [agent]
        kind = "hcucb"
        delta = 0.1
    "#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_toml_str(BASIC, "basic").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.checkpoint_schedule, CheckpointSchedule::PowersOfTwo);
        assert!(cfg.instrument);
        assert!(!cfg.trace);
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap(), "again").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_delta_names_the_field() {
        let mut v: toml::Value = toml::from_str(BASIC).unwrap();
        set_dotted(&mut v, "agent.delta", "1.5").unwrap();
        let cfg = RunConfig::from_value(v, "x").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("agent.delta"), "{err}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = BASIC.replace("delta = 0.1", "delta = 0.1\ndleta = 3");
        let err = RunConfig::from_toml_str(&text, "typo").unwrap_err().to_string();
        assert!(err.contains("dleta"), "{err}");
    }

    #[test]
    fn dotted_overrides() {
        let mut v: toml::Value = toml::from_str(BASIC).unwrap();
        set_dotted(&mut v, "agent.kind", "uniform-random").unwrap();
        set_dotted(&mut v, "horizon", "7").unwrap();
        set_dotted(&mut v, "checkpoint_schedule", "{ explicit = [1, 7] }").unwrap();
        let cfg = RunConfig::from_value(v, "x").unwrap();
        assert_eq!(cfg.agent.kind, crate::agents::AgentKind::UniformRandom);
        assert_eq!(cfg.horizon, 7);
        assert_eq!(cfg.checkpoint_schedule, CheckpointSchedule::Explicit(vec![1, 7]));
    }

    #[test]
    fn environment_sources_are_exclusive() {
        let mut cfg = RunConfig::from_toml_str(BASIC, "basic").unwrap();
        cfg.environment.spec_file = Some("x.toml".into());
        assert!(cfg.validate().is_err());
        cfg.environment = EnvironmentConfig::default();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn per_seed_generation_offsets_the_seed() {
        let mut cfg = RunConfig::from_toml_str(BASIC, "basic").unwrap();
        cfg.environment.per_seed = true;
        let a = cfg.spec_for_seed(1).unwrap();
        let b = cfg.spec_for_seed(2).unwrap();
        assert_eq!(a.seed, 4);
        assert_eq!(b.seed, 5);
        assert_ne!(a.reward_params, b.reward_params);
    }

    #[test]
    fn output_root() {
        let root = Path::new("/tmp/root");
        assert_eq!(resolve_output_dir(Path::new("a"), Some(root)), PathBuf::from("/tmp/root/a"));
        assert_eq!(resolve_output_dir(Path::new("/abs"), Some(root)), PathBuf::from("/abs"));
        assert_eq!(resolve_output_dir(Path::new("a"), None), PathBuf::from("a"));
    }
}
