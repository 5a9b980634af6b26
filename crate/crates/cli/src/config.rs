//! Flat `key = value` run configuration with dotted keys.
//!
//! Resolution order: defaults, then the `--config` file, then flags. The
//! top-level `seed` (falling back to `MARKOVTYPER_SEED`) fills every
//! per-stage seed that was not set explicitly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use markovtype::eval::{Method, SessionConfig};
use markovtype::model::ModelConfig;
use markovtype::sim::SynthConfig;
use markovtype::trainer::{DiscountKind, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SEED_ENV: &str = "MARKOVTYPER_SEED";
pub const RESOLVED_CONFIG: &str = "config.txt";

const SEED_KEYS: [&str; 4] = ["synth.seed", "split.seed", "train.seed", "session.seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Threshold,
    Sweep,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub run: RunSection,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub session: SessionConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            run: RunSection {
                method: Method::Markovtype,
            },
            synth: SynthConfig::default(),
            split: SplitConfig {
                test_fraction: 0.2,
                val_fraction: 0.1,
                seed: 0,
            },
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            session: SessionConfig::default(),
            eval: EvalSection { mode: Mode::Both },
        }
    }
}

/// A bad key or value: reported as a usage error.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

fn flatten(prefix: &str, value: &Value, out: &mut BTreeMap<String, String>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        Value::Array(_) => {
            // only the conv stack is a list
            let conv: Vec<markovtype::model::ConvSpec> =
                serde_json::from_value(value.clone()).expect("conv stack serializes");
            out.insert(prefix.to_string(), ModelConfig::format_conv(&conv));
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

fn leaf<'a>(root: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    let mut node = root;
    for part in key.split('.') {
        node = node.as_object_mut()?.get_mut(part)?;
    }
    (!node.is_object()).then_some(node)
}

fn parse_leaf(key: &str, current: &Value, raw: &str) -> Result<Value> {
    let bad = |e: &dyn fmt::Display| err(format!("invalid value `{raw}` for `{key}`: {e}"));
    match key {
        "run.method" => {
            Method::from_str(raw).map_err(|e| bad(&e))?;
        }
        "train.discount" => {
            DiscountKind::from_str(raw).map_err(|e| bad(&e))?;
        }
        _ => {}
    }
    Ok(match current {
        Value::Number(n) if n.is_u64() => Value::from(raw.parse::<u64>().map_err(|e| bad(&e))?),
        Value::Number(_) => {
            let v = raw.parse::<f64>().map_err(|e| bad(&e))?;
            serde_json::Number::from_f64(v)
                .map(Value::Number)
                .ok_or_else(|| err(format!("`{key}` must be finite, got `{raw}`")))?
        }
        Value::Bool(_) => Value::Bool(raw.parse::<bool>().map_err(|e| bad(&e))?),
        Value::Array(_) => {
            let conv = ModelConfig::parse_conv(raw).map_err(|e| bad(&e))?;
            serde_json::to_value(conv).expect("conv stack serializes")
        }
        _ => Value::String(raw.to_string()),
    })
}

/// Key/value assignments collected from files and flags, in order.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    entries: Vec<(String, String)>,
}

impl Overrides {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.iter().any(|(k, _)| k == key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut out = Overrides::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("{origin}:{}: expected `key = value`", i + 1)))?;
            out.set(k.trim(), v.trim());
        }
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// `key=value` from `--set`.
    pub fn parse_assignment(&mut self, raw: &str) -> Result<()> {
        let (k, v) = raw
            .split_once('=')
            .ok_or_else(|| err(format!("`--set {raw}`: expected key=value")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }
}

impl RunConfig {
    /// Apply `overrides` on top of `base` and fill derived defaults.
    pub fn resolve(base: &RunConfig, overrides: &Overrides, env_seed: Option<&str>) -> Result<Self> {
        let mut cfg = base.apply(overrides)?;

        if !overrides.contains("seed") {
            if let Some(raw) = env_seed {
                cfg.seed = raw
                    .trim()
                    .parse()
                    .map_err(|e| err(format!("{SEED_ENV}=`{raw}`: {e}")))?;
            }
        }
        for key in SEED_KEYS {
            if !overrides.contains(key) {
                let seed = cfg.seed;
                match key {
                    "synth.seed" => cfg.synth.seed = seed,
                    "split.seed" => cfg.split.seed = seed,
                    "train.seed" => cfg.train.seed = seed,
                    _ => cfg.session.seed = seed,
                }
            }
        }
        if !overrides.contains("train.epochs") && cfg.run.method == Method::Rb1d {
            cfg.train.epochs = TrainConfig::binary_default().epochs;
        }
        if !overrides.contains("train.lambda") {
            cfg.train.lambda = cfg.train.discount.default_lambda();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |what: &str, r: markovtype::Result<()>| r.map_err(|e| err(format!("{what}: {e}")));
        wrap("synth", self.synth.validate())?;
        wrap("model", self.model.validate())?;
        wrap("train", self.train.validate())?;
        wrap("session", self.session.validate())?;
        let SplitConfig {
            test_fraction,
            val_fraction,
            ..
        } = self.split;
        if !(test_fraction > 0.0 && test_fraction < 1.0 && val_fraction > 0.0 && val_fraction < 1.0) {
            return Err(err("split fractions must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn flat(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    /// The resolved config as reloadable `key = value` text.
    pub fn to_text(&self) -> String {
        self.flat().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Plain assignment of `overrides`, without derived defaults.
    pub fn apply(&self, overrides: &Overrides) -> Result<RunConfig> {
        let mut tree = serde_json::to_value(self).expect("config serializes");
        for (key, raw) in overrides.iter() {
            let slot = leaf(&mut tree, key).ok_or_else(|| err(format!("unknown config key `{key}`")))?;
            *slot = parse_leaf(key, slot, raw)?;
        }
        serde_json::from_value(tree).map_err(|e| err(format!("invalid configuration: {e}")))
    }

    /// First key of `overrides` inside one of `sections` whose value differs
    /// from `self`.
    pub fn conflict(&self, overrides: &Overrides, sections: &[&str]) -> Result<Option<String>> {
        let (mine, theirs) = (self.flat(), self.apply(overrides)?.flat());
        Ok(overrides
            .iter()
            .map(|(k, _)| k)
            .filter(|k| sections.iter().any(|s| k.split('.').next() == Some(*s)))
            .find(|k| mine.get(*k) != theirs.get(*k))
            .map(str::to_string))
    }
}
